"""Numba @njit kernels: scalar tree cores with batch loop wrappers.

Mirrors numpy_impl's API and semantics exactly; results must agree to within
floating-point roundoff. First call per process pays JIT compilation
(cache=True persists compiled code across runs).
"""

import numpy as np
from numba import njit

from .numpy_impl import (  # noqa: F401  (re-exported, not jitted: cheap scalar helper)
    LR_DEGENERATE_D,
    LR_DEGENERATE_VOLTIME,
    SIGMA_FLOOR,
    lr_tree_geometry,
)


@njit(cache=True)
def _pp_inv(z, n):
    a = z / (n + 1.0 / 3.0 + 0.1 / (n + 1.0))
    s = 1.0 if z >= 0.0 else -1.0
    return 0.5 + 0.5 * s * np.sqrt(1.0 - np.exp(-a * a * (n + 1.0 / 6.0)))


@njit(cache=True)
def _det_limit_one(S, K, tau, r, q, phi, american):
    euro = phi * (S * np.exp(-q * tau) - K * np.exp(-r * tau))
    if euro < 0.0:
        euro = 0.0
    if not american:
        return euro
    best = euro
    intrinsic = phi * (S - K)
    if intrinsic > best:
        best = intrinsic
    if q > 0.0 and r > 0.0 and r != q:
        ratio = (r * K) / (q * S)
        if ratio > 0.0:
            tstar = np.log(ratio) / (r - q)
            if 0.0 < tstar < tau:
                val = phi * (S * np.exp(-q * tstar) - K * np.exp(-r * tstar))
                if val > best:
                    best = val
    if best < 0.0:
        best = 0.0
    return best


@njit(cache=True)
def _tree_one(S, K, lnu, lnd, p, disc, steps, phi, american, nodes, V):
    lnS = np.log(S)
    for j in range(steps + 1):
        nodes[j] = np.exp(lnS + j * lnu + (steps - j) * lnd)
        v = phi * (nodes[j] - K)
        V[j] = v if v > 0.0 else 0.0
    pu = disc * p
    pd = disc * (1.0 - p)
    inv_d = np.exp(-lnd)
    for i in range(steps - 1, -1, -1):
        for j in range(i + 1):
            cont = pu * V[j + 1] + pd * V[j]
            if american:
                nodes[j] = nodes[j] * inv_d
                ex = phi * (nodes[j] - K)
                if ex > cont:
                    cont = ex
            V[j] = cont
    return V[0]


@njit(cache=True)
def _crr_batch(S, K, tau, sigma, r, q, phi, american, steps, out):
    nodes = np.empty(steps + 1, dtype=np.float64)
    V = np.empty(steps + 1, dtype=np.float64)
    for i in range(S.shape[0]):
        sig = sigma[i] if sigma[i] > SIGMA_FLOOR else SIGMA_FLOOR
        if tau[i] <= 0.0:
            pay = phi[i] * (S[i] - K[i])
            out[i] = pay if pay > 0.0 else 0.0
            continue
        dt = tau[i] / steps
        lnu = sig * np.sqrt(dt)
        lnd = -lnu
        a = np.exp((r[i] - q[i]) * dt)
        p = (a - np.exp(lnd)) / (np.exp(lnu) - np.exp(lnd))
        if p < 0.0 or p > 1.0:
            raise ValueError(
                "CRR risk-neutral probability outside [0, 1]; "
                "sigma*sqrt(dt) too small relative to (r - q)*dt"
            )
        disc = np.exp(-r[i] * dt)
        out[i] = _tree_one(
            S[i], K[i], lnu, lnd, p, disc, steps, phi[i], american, nodes, V
        )
    return out


@njit(cache=True)
def _lr_batch(S, K, tau, sigma, r, q, phi, american, steps, out):
    nodes = np.empty(steps + 1, dtype=np.float64)
    V = np.empty(steps + 1, dtype=np.float64)
    for i in range(S.shape[0]):
        sig = sigma[i] if sigma[i] > SIGMA_FLOOR else SIGMA_FLOOR
        if tau[i] <= 0.0:
            pay = phi[i] * (S[i] - K[i])
            out[i] = pay if pay > 0.0 else 0.0
            continue
        voltime = sig * np.sqrt(tau[i])
        d1 = (np.log(S[i] / K[i]) + (r[i] - q[i] + 0.5 * sig * sig) * tau[i]) / voltime
        d2 = d1 - voltime
        if (
            voltime < LR_DEGENERATE_VOLTIME
            or abs(d1) > LR_DEGENERATE_D
            or abs(d2) > LR_DEGENERATE_D
        ):
            out[i] = _det_limit_one(S[i], K[i], tau[i], r[i], q[i], phi[i], american)
            continue
        dt = tau[i] / steps
        p = _pp_inv(d2, steps)
        pbar = _pp_inv(d1, steps)
        growth = np.exp((r[i] - q[i]) * dt)
        u = growth * pbar / p
        d = growth * (1.0 - pbar) / (1.0 - p)
        disc = np.exp(-r[i] * dt)
        out[i] = _tree_one(
            S[i], K[i], np.log(u), np.log(d), p, disc, steps, phi[i], american,
            nodes, V,
        )
    return out


def _prep(S, K, tau, sigma, r, q, phi):
    S = np.atleast_1d(np.asarray(S, dtype=np.float64))
    arrs = [
        np.ascontiguousarray(np.broadcast_to(np.asarray(x, dtype=np.float64), S.shape))
        for x in (K, tau, sigma, r, q, phi)
    ]
    return np.ascontiguousarray(S), arrs


def crr_price_batch(S, K, tau, sigma, r, q, phi, american, steps):
    S, (K, tau, sigma, r, q, phi) = _prep(S, K, tau, sigma, r, q, phi)
    out = np.empty(S.shape, dtype=np.float64)
    return _crr_batch(S, K, tau, sigma, r, q, phi, american, int(steps), out)


def lr_price_batch(S, K, tau, sigma, r, q, phi, american, steps):
    S, (K, tau, sigma, r, q, phi) = _prep(S, K, tau, sigma, r, q, phi)
    out = np.empty(S.shape, dtype=np.float64)
    return _lr_batch(S, K, tau, sigma, r, q, phi, american, int(steps), out)


def peizer_pratt(z, n):
    return _pp_inv(float(z), float(n))


def deterministic_limit_price(S, K, tau, r, q, phi, american):
    S = np.atleast_1d(np.asarray(S, dtype=np.float64))
    arrs = [
        np.broadcast_to(np.asarray(x, dtype=np.float64), S.shape)
        for x in (K, tau, r, q, phi)
    ]
    K, tau, r, q, phi = arrs
    out = np.empty(S.shape, dtype=np.float64)
    for i in range(S.shape[0]):
        out[i] = _det_limit_one(S[i], K[i], tau[i], r[i], q[i], phi[i], bool(american))
    return out


@njit(cache=True)
def _euler_paths(v0, theta, kappa, sigma_v, dt, z, out):
    n_paths, n_steps = z.shape
    sqdt = np.sqrt(dt)
    for i in range(n_paths):
        cur = v0[i]
        out[i, 0] = cur
        for t in range(n_steps):
            drift = cur + kappa * (theta[i, t] - cur) * dt
            diff = sigma_v * np.sqrt(max(cur, 0.0)) * sqdt * z[i, t]
            cur = abs(drift + diff)
            out[i, t + 1] = cur
    return out


def euler_variance_paths(v0, theta, kappa, sigma_v, dt, z):
    z = np.ascontiguousarray(np.atleast_2d(np.asarray(z, dtype=np.float64)))
    n_paths, n_steps = z.shape
    v0 = np.ascontiguousarray(
        np.broadcast_to(np.asarray(v0, dtype=np.float64), (n_paths,))
    )
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 1:
        theta = np.broadcast_to(theta, (n_paths, n_steps))
    theta = np.ascontiguousarray(theta)
    out = np.empty((n_paths, n_steps + 1), dtype=np.float64)
    return _euler_paths(v0, theta, float(kappa), float(sigma_v), float(dt), z, out)
