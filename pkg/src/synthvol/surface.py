"""Smile and term-structure shape functions, and their joint training with
per-ticker variance levels.

Two shape representations share one contract: psi(tau_days, moneyness,
e, e_peer) > 0, multiplying a per-ticker variance level theta so that model
IV = sqrt(theta * psi).

* Parametric: exp(b1 ln(tau) + b2 ln(m) + b3 ln(tau) ln(m) + b4 ln(m)^2
  + b5 ln(tau)^2), tau floored at one day. Raw log inputs, no standardization.
* Neural: a two-hidden-layer tanh MLP producing ln(psi); inputs
  (ln tau, ln m[, e, e_peer]) standardized to training-row mean/sd.

Training minimizes mean squared IV error jointly over the shape parameters
and per-ticker log-variance levels under one full-batch Adam optimizer with a
stepped learning-rate schedule and best-checkpoint patience on training loss.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import variance as variance_mod

THETA_PSI_FLOOR = 1e-10  # clamp before sqrt; gradient stops at the clamp
EARNINGS_CLIP = 30.0


# ---------------------------------------------------------------------------
# parametric shape


@dataclass(frozen=True)
class PsiBeta:
    """Five shape parameters: term decay, skew, DTE-skew cross, smile
    curvature, DTE curvature."""

    beta: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.beta, dtype=np.float64).reshape(5)
        if not np.all(np.isfinite(arr)):
            raise ValueError("beta must be finite")
        object.__setattr__(self, "beta", arr)


def _log_features(tau_days, m):
    tau = np.maximum(np.asarray(tau_days, dtype=np.float64), 1.0)
    m = np.asarray(m, dtype=np.float64)
    if np.any(m <= 0):
        raise ValueError("moneyness must be > 0")
    lt = np.log(tau)
    lm = np.log(m)
    return np.stack(np.broadcast_arrays(lt, lm, lt * lm, lm * lm, lt * lt), axis=-1)


def psi_param(tau_days, m, beta):
    """Parametric psi, vectorized; tau floored at one day."""
    b = beta.beta if isinstance(beta, PsiBeta) else np.asarray(beta, dtype=np.float64)
    return np.exp(_log_features(tau_days, m) @ b)


class ParametricShape:
    """psi via the five-parameter log-polynomial."""

    kind = "parametric"
    n_inputs = 2

    def __init__(self, beta):
        self.beta = beta if isinstance(beta, PsiBeta) else PsiBeta(np.asarray(beta))

    def value(self, tau_days, m, e=0.0, e_peer=0.0):
        return psi_param(tau_days, m, self.beta)

    def to_dict(self):
        return {"kind": "parametric", "beta": self.beta.beta.tolist()}


# ---------------------------------------------------------------------------
# neural shape

_ALLOWED_SIZES = {(4, 16, 16, 1), (4, 8, 8, 1), (2, 16, 16, 1), (2, 8, 8, 1)}


@dataclass
class MLPWeights:
    """Two-hidden-layer tanh MLP, identity output; produces ln(psi)."""

    sizes: tuple
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if self.sizes not in _ALLOWED_SIZES:
            raise ValueError(f"unsupported architecture {self.sizes}")
        n_in, h1, h2, n_out = self.sizes
        expect = [(n_in, h1), (h1,), (h1, h2), (h2,), (h2, n_out), (n_out,)]
        got = [self.w1.shape, self.b1.shape, self.w2.shape, self.b2.shape,
               self.w3.shape, self.b3.shape]
        if got != expect:
            raise ValueError(f"weight shapes {got} do not chain as {expect}")

    @classmethod
    def init(cls, sizes, rng):
        """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); zero biases."""
        n_in, h1, h2, n_out = sizes
        def layer(fi, fo):
            a = np.sqrt(6.0 / (fi + fo))
            return rng.uniform(-a, a, size=(fi, fo))
        return cls(
            sizes=tuple(sizes),
            w1=layer(n_in, h1), b1=np.zeros(h1),
            w2=layer(h1, h2), b2=np.zeros(h2),
            w3=layer(h2, n_out), b3=np.zeros(n_out),
        )

    @property
    def n_params(self):
        return sum(p.size for p in self.arrays().values())

    def arrays(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "w3": self.w3, "b3": self.b3}

    def copy(self):
        return MLPWeights(self.sizes, *(v.copy() for v in self.arrays().values()))


@dataclass(frozen=True)
class Standardization:
    """Per-input mean and sd, computed on training rows only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def from_rows(cls, X):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        if np.any(std <= 0):
            warnings.warn(
                "constant training input column; standardizing with sd = 1",
                RuntimeWarning, stacklevel=2,
            )
            std = np.where(std <= 0, 1.0, std)
        return cls(mean=mean, std=std)

    def apply(self, X):
        return (X - self.mean) / self.std


def mlp_forward(w, Z):
    """ln(psi) for standardized inputs Z of shape (n, n_in)."""
    a1 = np.tanh(Z @ w.w1 + w.b1)
    a2 = np.tanh(a1 @ w.w2 + w.b2)
    return (a2 @ w.w3 + w.b3)[:, 0]


def _mlp_forward_cache(w, Z):
    a1 = np.tanh(Z @ w.w1 + w.b1)
    a2 = np.tanh(a1 @ w.w2 + w.b2)
    out = (a2 @ w.w3 + w.b3)[:, 0]
    return out, (Z, a1, a2)


def _mlp_backward(w, cache, dout):
    """Gradients of sum(dout * output) w.r.t. all weights."""
    Z, a1, a2 = cache
    d3 = dout[:, None]                      # (n, 1)
    gw3 = a2.T @ d3
    gb3 = d3.sum(axis=0)
    d2 = (d3 @ w.w3.T) * (1.0 - a2 * a2)
    gw2 = a1.T @ d2
    gb2 = d2.sum(axis=0)
    d1 = (d2 @ w.w2.T) * (1.0 - a1 * a1)
    gw1 = Z.T @ d1
    gb1 = d1.sum(axis=0)
    return {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2, "w3": gw3, "b3": gb3}


class NeuralShape:
    """psi = exp(MLP(standardized inputs)); 2-input variant drops (e, e_peer)."""

    kind = "mlp"

    def __init__(self, weights, standardization):
        self.weights = weights
        self.standardization = standardization
        self.n_inputs = weights.sizes[0]

    def _inputs(self, tau_days, m, e, e_peer):
        tau = np.maximum(np.asarray(tau_days, dtype=np.float64), 1.0)
        m = np.asarray(m, dtype=np.float64)
        if np.any(m <= 0):
            raise ValueError("moneyness must be > 0")
        cols = [np.log(tau), np.log(m)]
        if self.n_inputs == 4:
            cols.append(np.asarray(e, dtype=np.float64))
            cols.append(np.asarray(e_peer, dtype=np.float64))
        X = np.stack(np.broadcast_arrays(*cols), axis=-1)
        return X.reshape(-1, self.n_inputs), X.shape[:-1]

    def value(self, tau_days, m, e=0.0, e_peer=0.0):
        X, shape = self._inputs(tau_days, m, e, e_peer)
        out = np.exp(mlp_forward(self.weights, self.standardization.apply(X)))
        return out.reshape(shape) if shape else float(out[0])

    def to_dict(self):
        return {
            "kind": "mlp",
            "sizes": list(self.weights.sizes),
            "weights": {k: v.tolist() for k, v in self.weights.arrays().items()},
            "standardization": {
                "mean": self.standardization.mean.tolist(),
                "std": self.standardization.std.tolist(),
            },
        }


def psi_nn(tau_days, m, e, e_peer, weights, standardization):
    """Neural psi; inputs standardized with *training* statistics."""
    return NeuralShape(weights, standardization).value(tau_days, m, e, e_peer)


def shape_from_dict(d):
    if d["kind"] == "parametric":
        return ParametricShape(np.asarray(d["beta"], dtype=np.float64))
    w = MLPWeights(
        sizes=tuple(d["sizes"]),
        **{k: np.asarray(v, dtype=np.float64) for k, v in d["weights"].items()},
    )
    z = Standardization(
        mean=np.asarray(d["standardization"]["mean"], dtype=np.float64),
        std=np.asarray(d["standardization"]["std"], dtype=np.float64),
    )
    return NeuralShape(w, z)


# ---------------------------------------------------------------------------
# earnings features


@dataclass(frozen=True)
class EarningsFeatures:
    e: float        # signed days to own nearest print, clipped to [-30, 30]
    e_peer: float   # min |days| over same-sector equity peers, clipped to 30


def _nearest_signed_days(obs_date, dates):
    """Signed days to the nearest print; ties prefer the future print."""
    deltas = [(d - obs_date).days for d in dates]
    best = min(deltas, key=lambda x: (abs(x), -np.sign(x)))
    return float(best)


def earnings_features(ticker, obs_date, calendar, sectors):
    """Own and peer earnings distances for one (ticker, date).

    calendar: ticker -> list of earnings dates. sectors: ticker ->
    (sector, is_etf). ETFs (and tickers missing from the calendar) take
    e = e_peer over the full equity universe; peers exclude self and ETFs.
    """
    if not calendar:
        warnings.warn("empty earnings calendar; features set to 30",
                      RuntimeWarning, stacklevel=2)
        return EarningsFeatures(e=EARNINGS_CLIP, e_peer=EARNINGS_CLIP)

    sector, is_etf = sectors.get(ticker, (None, False))
    etf_like = is_etf or ticker not in calendar or not calendar.get(ticker)

    def peer_min(universe):
        best = None
        for t in universe:
            if t == ticker or not calendar.get(t):
                continue
            t_sector, t_etf = sectors.get(t, (None, False))
            if t_etf:
                continue
            d = abs(_nearest_signed_days(obs_date, calendar[t]))
            if best is None or d < best:
                best = d
        return EARNINGS_CLIP if best is None else min(best, EARNINGS_CLIP)

    if etf_like:
        e_all = peer_min(calendar.keys())
        return EarningsFeatures(e=e_all, e_peer=e_all)

    own = _nearest_signed_days(obs_date, calendar[ticker])
    e = float(np.clip(own, -EARNINGS_CLIP, EARNINGS_CLIP))
    peers = [t for t in calendar if sectors.get(t, (None, False))[0] == sector]
    e_peer = peer_min(peers)
    return EarningsFeatures(e=e, e_peer=e_peer)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    patience: int = 200
    lr_schedule: tuple = ((0, 1e-3), (500, 5e-4), (1000, 2e-4), (1500, 1e-4))
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        epochs = [s[0] for s in self.lr_schedule]
        if epochs != sorted(epochs) or len(set(epochs)) != len(epochs):
            raise ValueError("lr_schedule epochs must be strictly increasing")

    def lr_at(self, epoch):
        lr = self.lr_schedule[0][1]
        for start, value in self.lr_schedule:
            if epoch >= start:
                lr = value
        return lr


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard bias-corrected Adam over a dict of arrays; updates in place."""
    state["t"] += 1
    t = state["t"]
    for k, p in params.items():
        g = grads[k]
        state["m"][k] = beta1 * state["m"][k] + (1 - beta1) * g
        state["v"][k] = beta2 * state["v"][k] + (1 - beta2) * g * g
        m_hat = state["m"][k] / (1 - beta1 ** t)
        v_hat = state["v"][k] / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def adam_init(params):
    return {
        "t": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


@dataclass
class FittedGroup:
    """One trained group: a shape shared across its tickers plus per-ticker
    variance levels and training metadata."""

    shape: object
    theta: dict
    loss_history: np.ndarray
    best_epoch: int
    best_loss: float
    train_rmse_pct: float
    n_obs: int
    seed: int
    config: TrainConfig = field(repr=False, default=None)

    def model_variance(self, ticker, tau_days, m, e=0.0, e_peer=0.0):
        spec = variance_mod.ThetaSpec(ticker_levels=self.theta, shape=self.shape)
        return variance_mod.theta_cal(ticker, tau_days, m, e, e_peer, spec)

    def model_iv(self, ticker, tau_days, m, e=0.0, e_peer=0.0):
        return float(np.sqrt(self.model_variance(ticker, tau_days, m, e, e_peer)))


def _loss_and_grads_common(ln_theta, theta_idx, ln_psi, iv):
    """Shared piece: loss plus gradient of the loss w.r.t. ln(theta*psi)."""
    n = iv.size
    c = np.exp(ln_theta[theta_idx] + ln_psi)
    clamped = c < THETA_PSI_FLOOR
    c = np.maximum(c, THETA_PSI_FLOOR)
    pred = np.sqrt(c)
    resid = pred - iv
    loss = float(np.mean(resid * resid))
    dlnc = (resid * pred) / n
    dlnc[clamped] = 0.0
    g_ln_theta = np.zeros_like(ln_theta)
    np.add.at(g_ln_theta, theta_idx, dlnc)
    return loss, dlnc, g_ln_theta


def train_surface(tickers, tau_days, m, iv, arch, config, e=None, e_peer=None):
    """Fit one group: shape parameters and per-ticker log-variance levels
    jointly, full batch, under a single Adam optimizer.

    arch: 'parametric' or an (n_inputs, hidden) tuple for the tanh MLP.
    Returns the best checkpoint by training loss.
    """
    tickers = np.asarray(tickers)
    tau_days = np.asarray(tau_days, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    iv = np.asarray(iv, dtype=np.float64)
    n = iv.size
    if n == 0:
        raise ValueError("no observations to fit")
    if not (tau_days.size == m.size == tickers.size == n):
        raise ValueError("input arrays must share a length")

    unique_tickers, theta_idx = np.unique(tickers, return_inverse=True)
    # level initialized from each ticker's mean squared market IV
    theta0 = np.array([
        np.mean(iv[theta_idx == k] ** 2) for k in range(unique_tickers.size)
    ])
    ln_theta = np.log(np.maximum(theta0, THETA_PSI_FLOOR))

    rng = np.random.default_rng(config.seed)
    log_feats = _log_features(tau_days, m)   # (n, 5): lnt, lnm, cross, lnm^2, lnt^2

    if arch == "parametric":
        # the Adam schedule cannot travel far from a cold start; seed beta
        # with the closed-form regression of ln(iv^2 / theta0) on the features
        target = np.log(np.maximum(iv, 1e-6) ** 2) - ln_theta[theta_idx]
        beta0, *_ = np.linalg.lstsq(log_feats, target, rcond=None)
        params = {"beta": beta0.astype(np.float64), "ln_theta": ln_theta.copy()}
        standardization = None
        n_inputs = 2

        def forward_backward(p):
            ln_psi = log_feats @ p["beta"]
            loss, dlnc, g_lt = _loss_and_grads_common(p["ln_theta"], theta_idx, ln_psi, iv)
            return loss, {"beta": log_feats.T @ dlnc, "ln_theta": g_lt}

        def snapshot(p):
            return ParametricShape(p["beta"].copy())
    else:
        n_inputs, hidden = arch
        cols = [np.log(np.maximum(tau_days, 1.0)), np.log(m)]
        if n_inputs == 4:
            if e is None or e_peer is None:
                raise ValueError("4-input architecture requires e and e_peer")
            cols += [np.asarray(e, dtype=np.float64), np.asarray(e_peer, dtype=np.float64)]
        X = np.stack(cols, axis=-1)
        standardization = Standardization.from_rows(X)
        Z = standardization.apply(X)
        weights = MLPWeights.init((n_inputs, hidden, hidden, 1), rng)
        params = {"ln_theta": ln_theta.copy(), **weights.arrays()}

        def forward_backward(p):
            w = MLPWeights(weights.sizes, p["w1"], p["b1"], p["w2"], p["b2"],
                           p["w3"], p["b3"])
            ln_psi, cache = _mlp_forward_cache(w, Z)
            loss, dlnc, g_lt = _loss_and_grads_common(p["ln_theta"], theta_idx, ln_psi, iv)
            grads = _mlp_backward(w, cache, dlnc)
            grads["ln_theta"] = g_lt
            return loss, grads

        def snapshot(p):
            w = MLPWeights(weights.sizes, *(p[k].copy() for k in
                                            ("w1", "b1", "w2", "b2", "w3", "b3")))
            return NeuralShape(w, standardization)

    state = adam_init(params)
    history = np.empty(config.epochs, dtype=np.float64)
    best_loss = np.inf
    best_epoch = -1
    best_params = None
    n_run = 0
    for epoch in range(config.epochs):
        loss, grads = forward_backward(params)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"non-finite training loss at epoch {epoch}: {loss!r}"
            )
        history[epoch] = loss
        n_run = epoch + 1
        if loss < best_loss:
            best_loss = loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
        elif epoch - best_epoch >= config.patience:
            break
        adam_step(params, grads, state, config.lr_at(epoch),
                  config.beta1, config.beta2, config.eps)

    theta_map = {
        str(t): float(np.exp(best_params["ln_theta"][k]))
        for k, t in enumerate(unique_tickers)
    }
    return FittedGroup(
        shape=snapshot(best_params),
        theta=theta_map,
        loss_history=history[:n_run],
        best_epoch=best_epoch,
        best_loss=best_loss,
        train_rmse_pct=float(np.sqrt(best_loss) * 100.0),
        n_obs=n,
        seed=config.seed,
        config=config,
    )
