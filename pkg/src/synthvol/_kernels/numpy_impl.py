"""Pure-numpy batch kernels: recombining-tree pricers and Euler variance stepping.

Everything here is vectorized across the contract/path batch dimension; the
backward induction runs as a Python loop over tree layers with (batch, nodes)
array operations per layer. Selected when numba is disabled or unavailable.
"""

import numpy as np

SIGMA_FLOOR = 1e-8
# below this sigma*sqrt(tau), or beyond this |d1|/|d2|, the LR tree is priced
# in its deterministic sigma -> 0 limit (the Peizer-Pratt inversion saturates
# to p in {0, 1} in float64, leaving d = 0/0)
LR_DEGENERATE_VOLTIME = 1e-6
LR_DEGENERATE_D = 30.0


def peizer_pratt(z, n):
    """Peizer-Pratt method-2 inversion of the binomial CDF at odd depth n.

    h(z) = 1/2 + sign(z)/2 * sqrt(1 - exp(-(z / (n + 1/3 + 0.1/(n+1)))^2 * (n + 1/6)))
    """
    a = z / (n + 1.0 / 3.0 + 0.1 / (n + 1.0))
    return 0.5 + 0.5 * np.sign(z) * np.sqrt(1.0 - np.exp(-a * a * (n + 1.0 / 6.0)))


def deterministic_limit_price(S, K, tau, r, q, phi, american):
    """sigma -> 0 limit: optimal stopping on the deterministic forward path.

    European: discounted terminal intrinsic. American: max of the discounted
    intrinsic over t in [0, tau]; candidates are the endpoints plus the interior
    stationary point of phi*(S e^{-q t} - K e^{-r t}).
    """
    S = np.asarray(S, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    S, K, tau, r, q, phi = np.broadcast_arrays(S, K, tau, r, q, phi)

    euro = np.maximum(phi * (S * np.exp(-q * tau) - K * np.exp(-r * tau)), 0.0)
    if not american:
        return euro
    best = np.maximum(euro, np.maximum(phi * (S - K), 0.0))
    # interior stationary point of S e^{-qt} - K e^{-rt}
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (r * K) / (q * S)
        tstar = np.where(
            (q > 0) & (r > 0) & (ratio > 0) & (r != q),
            np.log(ratio) / (r - q),
            -1.0,
        )
    inside = (tstar > 0) & (tstar < tau) & np.isfinite(tstar)
    if np.any(inside):
        val = np.maximum(
            phi * (S * np.exp(-q * tstar) - K * np.exp(-r * tstar)), 0.0
        )
        best = np.where(inside, np.maximum(best, val), best)
    return best


def _backward_induction(S, K, phi, lnu, lnd, p, disc, steps, american):
    """Shared backward induction over a (batch, nodes) value array."""
    n = steps
    j = np.arange(n + 1, dtype=np.float64)
    log_nodes = np.log(S)[:, None] + j[None, :] * lnu[:, None] + (n - j[None, :]) * lnd[:, None]
    nodes = np.exp(log_nodes)
    V = np.maximum(phi[:, None] * (nodes - K[:, None]), 0.0)
    pu = (disc * p)[:, None]
    pd = (disc * (1.0 - p))[:, None]
    inv_d = np.exp(-lnd)[:, None]
    for i in range(n - 1, -1, -1):
        V = pu * V[:, 1 : i + 2] + pd * V[:, : i + 1]
        if american:
            nodes = nodes[:, : i + 1] * inv_d
            V = np.maximum(V, phi[:, None] * (nodes - K[:, None]))
    return V[:, 0]


def crr_price_batch(S, K, tau, sigma, r, q, phi, american, steps):
    """Cox-Ross-Rubinstein tree, batched. u = e^{sigma sqrt(dt)}, d = 1/u,
    p = (e^{(r-q)dt} - d)/(u - d), per-step discount e^{-r dt}."""
    S = np.atleast_1d(np.asarray(S, dtype=np.float64))
    K, tau, sigma, r, q = (
        np.broadcast_to(np.asarray(x, dtype=np.float64), S.shape).copy()
        for x in (K, tau, sigma, r, q)
    )
    phi = np.broadcast_to(np.asarray(phi, dtype=np.float64), S.shape).copy()
    sigma = np.maximum(sigma, SIGMA_FLOOR)

    out = np.empty(S.shape, dtype=np.float64)
    expired = tau <= 0.0
    if np.any(expired):
        out[expired] = np.maximum(phi[expired] * (S[expired] - K[expired]), 0.0)
    live = ~expired
    if not np.any(live):
        return out

    Sl, Kl, taul, sigl, rl, ql, phil = (
        x[live] for x in (S, K, tau, sigma, r, q, phi)
    )
    dt = taul / steps
    lnu = sigl * np.sqrt(dt)
    lnd = -lnu
    a = np.exp((rl - ql) * dt)
    p = (a - np.exp(lnd)) / (np.exp(lnu) - np.exp(lnd))
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError(
            "CRR risk-neutral probability outside [0, 1]; "
            "sigma*sqrt(dt) too small relative to (r - q)*dt"
        )
    disc = np.exp(-rl * dt)
    out[live] = _backward_induction(Sl, Kl, phil, lnu, lnd, p, disc, steps, american)
    return out


def lr_price_batch(S, K, tau, sigma, r, q, phi, american, steps):
    """Leisen-Reimer tree (Peizer-Pratt method-2 inversion), batched, odd steps.

    p = h(d2), pbar = h(d1), u = e^{(r-q)dt} pbar/p, d = e^{(r-q)dt} (1-pbar)/(1-p).
    """
    S = np.atleast_1d(np.asarray(S, dtype=np.float64))
    K, tau, sigma, r, q = (
        np.broadcast_to(np.asarray(x, dtype=np.float64), S.shape).copy()
        for x in (K, tau, sigma, r, q)
    )
    phi = np.broadcast_to(np.asarray(phi, dtype=np.float64), S.shape).copy()
    sigma = np.maximum(sigma, SIGMA_FLOOR)

    out = np.empty(S.shape, dtype=np.float64)
    expired = tau <= 0.0
    if np.any(expired):
        out[expired] = np.maximum(phi[expired] * (S[expired] - K[expired]), 0.0)

    live = ~expired
    if not np.any(live):
        return out
    voltime = sigma * np.sqrt(np.maximum(tau, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(S / K) + (r - q + 0.5 * sigma * sigma) * tau) / voltime
        d2 = d1 - voltime
    degenerate = live & (
        (voltime < LR_DEGENERATE_VOLTIME)
        | (np.abs(d1) > LR_DEGENERATE_D)
        | (np.abs(d2) > LR_DEGENERATE_D)
    )
    if np.any(degenerate):
        out[degenerate] = deterministic_limit_price(
            S[degenerate], K[degenerate], tau[degenerate],
            r[degenerate], q[degenerate], phi[degenerate], american,
        )
    tree = live & ~degenerate
    if not np.any(tree):
        return out

    Sl, Kl, taul, rl, ql, phil = (x[tree] for x in (S, K, tau, r, q, phi))
    d1l, d2l = d1[tree], d2[tree]
    dt = taul / steps
    p = peizer_pratt(d2l, steps)
    pbar = peizer_pratt(d1l, steps)
    growth = np.exp((rl - ql) * dt)
    u = growth * pbar / p
    d = growth * (1.0 - pbar) / (1.0 - p)
    disc = np.exp(-rl * dt)
    out[tree] = _backward_induction(
        Sl, Kl, phil, np.log(u), np.log(d), p, disc, steps, american
    )
    return out


def lr_tree_geometry(S, K, tau, sigma, r, q, steps):
    """(u, d, p) of the LR tree for one contract; used by pinning diagnostics."""
    sigma = max(float(sigma), SIGMA_FLOOR)
    voltime = sigma * np.sqrt(tau)
    d1 = (np.log(S / K) + (r - q + 0.5 * sigma * sigma) * tau) / voltime
    d2 = d1 - voltime
    dt = tau / steps
    p = float(peizer_pratt(np.float64(d2), steps))
    pbar = float(peizer_pratt(np.float64(d1), steps))
    growth = np.exp((r - q) * dt)
    u = growth * pbar / p
    d = growth * (1.0 - pbar) / (1.0 - p)
    return u, d, p


def euler_variance_paths(v0, theta, kappa, sigma_v, dt, z):
    """Euler-Maruyama with reflection, batched over paths.

    v0: (P,), theta: (P, T) or (T,), z: (P, T) -> (P, T+1) including v0.
    v' = | v + kappa (theta - v) dt + sigma_v sqrt(max(v, 0)) sqrt(dt) z |
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    n_paths, n_steps = z.shape
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 1:
        theta = np.broadcast_to(theta, (n_paths, n_steps))
    v = np.empty((n_paths, n_steps + 1), dtype=np.float64)
    v[:, 0] = v0
    sqdt = np.sqrt(dt)
    cur = np.array(v[:, 0], dtype=np.float64)
    for t in range(n_steps):
        cur = np.abs(
            cur
            + kappa * (theta[:, t] - cur) * dt
            + sigma_v * np.sqrt(np.maximum(cur, 0.0)) * sqdt * z[:, t]
        )
        v[:, t + 1] = cur
    return v
