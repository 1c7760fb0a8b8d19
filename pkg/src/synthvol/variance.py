"""Mean-reverting variance process with a state-, mood-, and contract-dependent
reversion target.

The target factorizes as level x mood x shape: a per-ticker (optionally
per-regime-state) variance level, an aggregate market-mood multiplier
(1 + gamma * M), and a smile/term-structure shape psi evaluated at the
contract's DTE and moneyness. The calibration form drops the mood term and
uses a scalar per-ticker level; model IV is sqrt of that target.

Discretization is explicit Euler-Maruyama with a reflecting boundary at zero,
daily step 1/252 by default. The reflection makes the Feller condition
irrelevant: the process never goes negative regardless of parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

TRADING_DAYS = 252.0


@dataclass(frozen=True)
class HestonParams:
    kappa: float = 2.0
    sigma_v: float = 0.5
    rho: float = -0.6
    dt: float = 1.0 / TRADING_DAYS

    def __post_init__(self):
        if not (self.kappa > 0 and np.isfinite(self.kappa)):
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.sigma_v < 0:
            raise ValueError(f"sigma_v must be >= 0, got {self.sigma_v}")
        if abs(self.rho) > 1:
            raise ValueError(f"|rho| must be <= 1, got {self.rho}")
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        # explicit Euler reverts non-oscillatorily only for kappa*dt < 1
        if self.kappa * self.dt >= 1:
            raise ValueError(
                f"kappa*dt must be < 1 for stable reversion, got {self.kappa * self.dt}"
            )


class UnitShape:
    """psi identically 1; stands in when no smile model is attached."""

    n_inputs = 2

    def value(self, tau_days, m, e=0.0, e_peer=0.0):
        return np.ones_like(np.asarray(tau_days, dtype=np.float64) * np.asarray(m))


@dataclass
class ThetaSpec:
    """Level(s), mood sensitivity, and shape reference for the theta target.

    ticker_levels maps ticker -> scalar theta_i (calibration mode) or a
    per-state vector theta_{i,s} (simulation mode). gamma is the market-mood
    sensitivity. shape is any object exposing value(tau_days, m, e, e_peer).
    """

    ticker_levels: dict
    gamma: float = 0.0
    shape: object = field(default_factory=UnitShape)

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        for ticker, level in self.ticker_levels.items():
            arr = np.atleast_1d(np.asarray(level, dtype=np.float64))
            if np.any(arr <= 0):
                raise ValueError(f"theta level(s) for {ticker!r} must be > 0")

    def level(self, ticker, state=None):
        """Scalar theta_{i} or theta_{i,s} for 1-based state index."""
        raw = self.ticker_levels[ticker]
        arr = np.atleast_1d(np.asarray(raw, dtype=np.float64))
        if arr.size == 1:
            return float(arr[0])
        if state is None:
            raise ValueError(f"per-state levels for {ticker!r} require a state index")
        return float(arr[state - 1])

    def with_state_multipliers(self, multipliers):
        """Expand scalar levels into per-state vectors theta_i * multipliers.

        The calibration only ever produces scalar theta_i; this is the
        documented extension point for regime-dependent levels (e.g. elevated
        tail states) in simulation mode.
        """
        mult = np.asarray(multipliers, dtype=np.float64)
        if np.any(mult <= 0):
            raise ValueError("state multipliers must be > 0")
        levels = {
            t: float(np.atleast_1d(np.asarray(v, dtype=np.float64))[0]) * mult
            for t, v in self.ticker_levels.items()
        }
        return ThetaSpec(ticker_levels=levels, gamma=self.gamma, shape=self.shape)


def market_mood(current_states, n_states, n_tail):
    """Fraction of tickers currently occupying tail states (either end)."""
    states = np.asarray(list(current_states), dtype=np.int64)
    if states.size == 0:
        raise ValueError("market_mood requires at least one ticker state")
    if np.any((states < 1) | (states > n_states)):
        raise ValueError(f"states must lie in 1..{n_states}")
    in_tail = (states <= n_tail) | (states > n_states - n_tail)
    return float(np.mean(in_tail))


def theta_full(ticker, state, mood, tau_days, m, e, e_peer, spec):
    """Full target: theta_{i,s} * (1 + gamma * M) * psi(tau, m, e, e_peer)."""
    if not (0.0 <= mood <= 1.0):
        raise ValueError(f"mood must lie in [0, 1], got {mood}")
    if m <= 0:
        raise ValueError(f"moneyness must be > 0, got {m}")
    level = spec.level(ticker, state)
    psi = float(np.asarray(spec.shape.value(max(tau_days, 1.0), m, e, e_peer)))
    return level * (1.0 + spec.gamma * mood) * psi


def theta_cal(ticker, tau_days, m, e, e_peer, spec):
    """Calibration form: gamma = 0 and scalar theta_i. Model IV = sqrt(theta_cal)."""
    if m <= 0:
        raise ValueError(f"moneyness must be > 0, got {m}")
    level = spec.level(ticker)
    psi = float(np.asarray(spec.shape.value(max(tau_days, 1.0), m, e, e_peer)))
    return level * psi


def equilibrium_init(contract, S0, ticker, spec, state0=None, mood0=0.0,
                     e=0.0, e_peer=0.0, calibration=True):
    """v0 = theta evaluated at t=0 for this contract. There is deliberately no
    separate v0 parameter anywhere in the package: each (ticker, strike, DTE)
    triple starts at its own equilibrium implied variance."""
    m = contract.strike / S0
    tau_days = max(contract.dte, 1.0)
    if calibration:
        return theta_cal(ticker, tau_days, m, e, e_peer, spec)
    return theta_full(ticker, state0, mood0, tau_days, m, e, e_peer, spec)


def euler_step(v, theta_t, params, z):
    """One reflected Euler step:
    v' = | v + kappa (theta_t - v) dt + sigma_v sqrt(max(v,0)) sqrt(dt) z |."""
    drift = v + params.kappa * (theta_t - v) * params.dt
    diffusion = params.sigma_v * np.sqrt(max(v, 0.0)) * np.sqrt(params.dt) * z
    return abs(drift + diffusion)


def simulate_variance_path(v0, theta_path, params, z_path):
    """Iterate euler_step; returns the path including v0 (length T+1)."""
    theta_path = np.asarray(theta_path, dtype=np.float64)
    z_path = np.asarray(z_path, dtype=np.float64)
    if theta_path.shape != z_path.shape:
        raise ValueError("theta_path and z_path lengths must match")
    out = _kernels.euler_variance_paths(
        np.array([v0]), theta_path[None, :], params.kappa, params.sigma_v,
        params.dt, z_path[None, :],
    )
    return out[0]


def leverage_innovations(z_s, z_perp, rho):
    """Z_v = rho * Z_S + sqrt(1 - rho^2) * Z_perp."""
    z_s = np.asarray(z_s, dtype=np.float64)
    z_perp = np.asarray(z_perp, dtype=np.float64)
    return rho * z_s + np.sqrt(1.0 - rho * rho) * z_perp


def simulate_variance_path_coupled(v0, theta_path, params, z_s_path, z_perp_path):
    """Leverage-coupled variant: the variance innovation mixes the return
    innovation Z_S with an independent Z_perp through rho."""
    z_v = leverage_innovations(z_s_path, z_perp_path, params.rho)
    return simulate_variance_path(v0, theta_path, params, z_v)
