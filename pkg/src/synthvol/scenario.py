"""Forward path-conditional simulation of option premia.

Per path: the regime-switching marginal drives the spot; a leverage-coupled
reflected square-root variance process (reverting to the scalar per-ticker
level) drives the IV through sigma_t = sqrt(v_t * psi(K/S_t, T-t)); and a
201-step Leisen-Reimer American repricing marks each contract every trading
day. Terminal P&L per short contract is entry premium minus terminal payoff.

Paths use counter-based RNG streams (SeedSequence of [seed, path index]), so
concurrent path execution reproduces sequential results exactly.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import jumphmm, lattice, variance

TRADING_DAYS = 252.0


class EventShapeAdapter:
    """Feeds a 4-input shape its earnings distances along the horizon.

    Day index recovers as horizon - tau_days; e counts down to the scheduled
    own print (day index, may fall outside the window) and e_peer to the
    nearest same-sector print. With no prints configured both inputs sit at
    the maximal clipped distance of 30 ("no scheduled event"). This mode is
    exposed for experimentation; the validated scenario path is the 2-input
    shape, which ignores the event inputs entirely.
    """

    def __init__(self, shape, horizon, own_print_day=None, peer_print_day=None):
        self.shape = shape
        self.horizon = float(horizon)
        self.own_print_day = own_print_day
        self.peer_print_day = peer_print_day

    def value(self, tau_days, m, e=0.0, e_peer=0.0):
        t = self.horizon - np.asarray(tau_days, dtype=np.float64)
        if self.own_print_day is None:
            e_val = np.full_like(t, 30.0)
        else:
            e_val = np.clip(self.own_print_day - t, -30.0, 30.0)
        if self.peer_print_day is None:
            ep_val = np.full_like(t, 30.0)
        else:
            ep_val = np.clip(np.abs(self.peer_print_day - t), 0.0, 30.0)
        return self.shape.value(tau_days, m, e_val, ep_val)


@dataclass(frozen=True)
class ScenarioContract:
    contract: lattice.ContractSpec
    entry_mid: float
    market_delta: float = None

    def __post_init__(self):
        if self.entry_mid < 0:
            raise ValueError("entry premium must be >= 0")


@dataclass
class ScenarioConfig:
    ticker: str
    hmm: jumphmm.HMMParams
    heston: variance.HestonParams
    theta_i: float
    shape: object                     # psi with .value(tau_days, m, e, e_peer)
    contracts: list
    s0: float
    horizon: int
    n_paths: int = 1000
    lr_steps: int = 201
    h_s: float = 0.015
    h_sigma: float = 0.005
    seed: int = 0
    compute_greeks: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1 trading day")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.s0 <= 0:
            raise ValueError("s0 must be > 0")
        if self.theta_i <= 0:
            raise ValueError("theta_i must be > 0")
        if self.lr_steps % 2 == 0:
            raise ValueError("lr_steps must be odd")
        if not self.contracts:
            raise ValueError("at least one contract required")
        for sc in self.contracts:
            dte = int(round(sc.contract.tau * TRADING_DAYS))
            if dte != self.horizon:
                raise ValueError(
                    f"contract expiry {dte} trading days != horizon {self.horizon}"
                )


@dataclass
class ScenarioResult:
    config: ScenarioConfig = field(repr=False)
    spots: np.ndarray          # (paths, T+1)
    states: np.ndarray         # (paths, T)
    var: np.ndarray            # (paths, T+1, contracts)
    sigma: np.ndarray          # (paths, T, contracts)
    fair_value: np.ndarray     # (paths, T+1, contracts); last layer = payoff
    z_s: np.ndarray            # (paths, T) return innovations
    z_v: np.ndarray            # (paths, T) variance innovations
    terminal_payoff: np.ndarray  # (paths, contracts)
    pnl: np.ndarray            # (paths, contracts) short P&L
    greeks: np.ndarray = None  # (paths, T, contracts, 3) optional


def _draw_path_inputs(config, path_index):
    """Counter-based per-path stream: states, emission shocks, orthogonal
    variance shocks. Fixed draw order keeps results identical under any
    execution order."""
    rng = np.random.default_rng([config.seed, path_index])
    states = jumphmm.simulate_states(config.hmm, config.horizon, rng)
    t_shocks = rng.standard_t(config.hmm.nu, size=config.horizon)
    z_perp = rng.standard_normal(config.horizon)
    return states, t_shocks, z_perp


def run_scenario(config):
    """Forward-simulate premium paths for every contract on shared spot paths."""
    T = config.horizon
    P = config.n_paths
    C = len(config.contracts)
    hmm = config.hmm
    heston = config.heston
    shape = config.shape

    states = np.empty((P, T), dtype=np.int64)
    t_shocks = np.empty((P, T))
    z_perp = np.empty((P, T))
    for j in range(P):
        states[j], t_shocks[j], z_perp[j] = _draw_path_inputs(config, j)

    growth = hmm.mu[states - 1] + hmm.sigma[states - 1] * t_shocks + hmm.drift_anchor
    spots = config.s0 * np.exp(
        np.concatenate([np.zeros((P, 1)), np.cumsum(growth, axis=1)], axis=1)
    )
    # return innovation normalized to unit variance, heavy tails preserved
    z_s = t_shocks * np.sqrt((hmm.nu - 2.0) / hmm.nu)
    z_v = variance.leverage_innovations(z_s, z_perp, heston.rho)

    strikes = np.array([sc.contract.strike for sc in config.contracts])
    phis = np.array([sc.contract.phi for sc in config.contracts])
    rates = np.array([sc.contract.rate for sc in config.contracts])
    divs = np.array([sc.contract.dividend for sc in config.contracts])

    var = np.empty((P, T + 1, C))
    sigma = np.empty((P, T, C))
    fair = np.empty((P, T + 1, C))

    # equilibrium initialization: v0 = theta_i * psi(contract) -- the only
    # way any variance path starts, per construction
    psi0 = np.asarray(shape.value(float(T), strikes / config.s0))
    var[:, 0, :] = config.theta_i * psi0[None, :]

    lat = lattice.LatticeSpec(kind="LR", steps=config.lr_steps)
    sqdt = np.sqrt(heston.dt)
    for t in range(T):
        tau_days = float(T - t)
        tau_years = tau_days / TRADING_DAYS
        S_t = spots[:, t]
        m = strikes[None, :] / S_t[:, None]                     # (P, C)
        psi_t = np.asarray(shape.value(tau_days, m))
        v_t = var[:, t, :]
        sig_t = np.sqrt(np.maximum(v_t, 0.0) * psi_t)
        sigma[:, t, :] = sig_t
        fair[:, t, :] = lattice.price_batch(
            np.repeat(S_t, C), np.tile(strikes, P), tau_years,
            sig_t.reshape(-1), np.tile(rates, P), np.tile(divs, P),
            np.tile(phis, P), True, lat,
        ).reshape(P, C)
        v_next = np.abs(
            v_t
            + heston.kappa * (config.theta_i - v_t) * heston.dt
            + heston.sigma_v * np.sqrt(np.maximum(v_t, 0.0)) * sqdt
            * z_v[:, t][:, None]
        )
        var[:, t + 1, :] = v_next

    payoff = np.maximum(phis[None, :] * (spots[:, -1][:, None] - strikes[None, :]), 0.0)
    fair[:, T, :] = payoff
    entry = np.array([sc.entry_mid for sc in config.contracts])
    pnl = entry[None, :] - payoff

    result = ScenarioResult(
        config=config, spots=spots, states=states, var=var, sigma=sigma,
        fair_value=fair, z_s=z_s, z_v=z_v, terminal_payoff=payoff, pnl=pnl,
    )
    if config.compute_greeks:
        result.greeks = greeks_along_paths(result)
    return result


def greeks_along_paths(result, h_s=None, h_sigma=None):
    """Per-path, per-day central-difference Greeks on the LR pricer.

    Long-position convention; short-position Greeks are the negatives.
    Roughly quintuples the lattice work, hence opt-in.
    """
    config = result.config
    h_s = config.h_s if h_s is None else h_s
    h_sigma = config.h_sigma if h_sigma is None else h_sigma
    P, T, C = result.sigma.shape
    strikes = np.array([sc.contract.strike for sc in config.contracts])
    phis = np.array([sc.contract.phi for sc in config.contracts])
    rates = np.array([sc.contract.rate for sc in config.contracts])
    divs = np.array([sc.contract.dividend for sc in config.contracts])
    lat = lattice.LatticeSpec(kind="LR", steps=config.lr_steps)
    out = np.empty((P, T, C, 3))
    for t in range(T):
        tau_years = (T - t) / TRADING_DAYS
        delta, gamma, vega = lattice.fd_greeks_batch(
            np.repeat(result.spots[:, t], C), np.tile(strikes, P), tau_years,
            result.sigma[:, t, :].reshape(-1), np.tile(rates, P),
            np.tile(divs, P), np.tile(phis, P), True, lat,
            h_s=h_s, h_sigma=h_sigma,
        )
        out[:, t, :, 0] = delta.reshape(P, C)
        out[:, t, :, 1] = gamma.reshape(P, C)
        out[:, t, :, 2] = vega.reshape(P, C)
    return out


def pnl_stats(result):
    """Terminal P&L statistics per contract, keyed by the summary-table rows."""
    stats = []
    for c, sc in enumerate(result.config.contracts):
        pnl = result.pnl[:, c]
        model_t0 = result.fair_value[:, 0, c]
        stats.append({
            "parity": sc.contract.parity,
            "strike": sc.contract.strike,
            "market_mid_entry_premium": sc.entry_mid,
            "model_t0_fair_value": float(model_t0[0]),
            "entry_edge_model_minus_market": float(model_t0[0] - sc.entry_mid),
            "mean_pnl": float(pnl.mean()),
            "median_pnl": float(np.median(pnl)),
            "std_pnl": float(pnl.std()),
            "pnl_5th_percentile": float(np.percentile(pnl, 5.0)),
            "worst_case_pnl": float(pnl.min()),
            "premium_kept_in_full": float(np.mean(result.terminal_payoff[:, c] == 0.0)),
        })
    return stats


def delta_rule_check(result, market_deltas=None):
    """Delta-as-probability heuristic: premium kept ~ 1 - |delta|."""
    checks = []
    for c, sc in enumerate(result.config.contracts):
        delta = sc.market_delta if market_deltas is None else market_deltas[c]
        if delta is None:
            raise ValueError(f"contract {c} has no market delta")
        predicted = 1.0 - abs(delta)
        simulated = float(np.mean(result.terminal_payoff[:, c] == 0.0))
        checks.append({
            "parity": sc.contract.parity,
            "market_delta": float(delta),
            "predicted_kept": predicted,
            "simulated_kept": simulated,
            "deviation": simulated - predicted,
        })
    return checks


def tail_bins(result):
    """Path index sets by terminal spot: worst 5%, top 5% (stats), and the
    top overlay set that drops the most extreme 1% for legibility."""
    terminal = result.spots[:, -1]
    order = np.argsort(terminal, kind="stable")
    n = terminal.size
    k5 = max(int(n * 0.05), 1)
    k1 = int(n * 0.01)
    worst = order[:k5]
    top_stats = order[n - k5:]
    top_overlay = order[n - k5: n - k1] if k1 > 0 else top_stats
    return {"worst_5pct": worst, "top_5pct": top_stats,
            "top_overlay_1_5pct": top_overlay}


def result_to_stats_json(result, path=None):
    """Deterministic JSON stats summary (sorted keys, fixed layout)."""
    payload = {
        "ticker": result.config.ticker,
        "seed": result.config.seed,
        "n_paths": result.config.n_paths,
        "horizon": result.config.horizon,
        "contracts": pnl_stats(result),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as f:
            f.write(text + "\n")
    return text


def result_to_path_rows(result):
    """Wide per-(path, day) rows: spot plus per-contract variance, IV, fair value."""
    P, T1, C = result.fair_value.shape
    header = ["path", "day", "spot"]
    for c in range(C):
        header += [f"var_{c}", f"sigma_{c}", f"fair_{c}"]
    rows = [header]
    for j in range(P):
        for t in range(T1):
            row = [j, t, result.spots[j, t]]
            for c in range(C):
                sig = result.sigma[j, t, c] if t < T1 - 1 else ""
                row += [result.var[j, t, c], sig, result.fair_value[j, t, c]]
            rows.append(row)
    return rows


def result_to_quantile_rows(result):
    """Long-format quantile bands per series and day: median, 25-75% band,
    and tail-overlay means (worst 5%, top 5% stats set, top 1-5% overlay)."""
    bins = tail_bins(result)
    P, T1, C = result.fair_value.shape
    series = {"spot": result.spots}
    for c in range(C):
        series[f"fair_{c}"] = result.fair_value[:, :, c]
        series[f"sigma_{c}"] = result.sigma[:, :, c]
    rows = [["series", "day", "q25", "median", "q75",
             "worst5_mean", "top5_mean", "top_overlay_mean"]]
    for name, mat in series.items():
        for t in range(mat.shape[1]):
            col = mat[:, t]
            rows.append([
                name, t,
                float(np.percentile(col, 25)), float(np.median(col)),
                float(np.percentile(col, 75)),
                float(col[bins["worst_5pct"]].mean()),
                float(col[bins["top_5pct"]].mean()),
                float(col[bins["top_overlay_1_5pct"]].mean()),
            ])
    return rows
