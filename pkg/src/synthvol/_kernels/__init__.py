"""Kernel backend selection.

Hot numeric kernels (tree backward induction, Euler variance stepping) run
through numba @njit by default. Set SYNTHVOL_DISABLE_NUMBA=1 to force the
pure-numpy batch implementations; the numpy path is also the automatic
fallback when numba is not importable. Both backends expose an identical API
and agree to floating-point roundoff (see benchmarks/bench_kernels.py).
"""

import os

_disable = os.environ.get("SYNTHVOL_DISABLE_NUMBA", "").strip().lower()
_use_numpy = _disable in ("1", "true", "yes")

if not _use_numpy:
    try:
        from . import numba_impl as _impl
        BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _impl
        BACKEND = "numpy"
else:
    from . import numpy_impl as _impl
    BACKEND = "numpy"

SIGMA_FLOOR = _impl.SIGMA_FLOOR
crr_price_batch = _impl.crr_price_batch
lr_price_batch = _impl.lr_price_batch
euler_variance_paths = _impl.euler_variance_paths
deterministic_limit_price = _impl.deterministic_limit_price
peizer_pratt = _impl.peizer_pratt
lr_tree_geometry = _impl.lr_tree_geometry

__all__ = [
    "BACKEND",
    "SIGMA_FLOOR",
    "crr_price_batch",
    "lr_price_batch",
    "euler_variance_paths",
    "deterministic_limit_price",
    "peizer_pratt",
    "lr_tree_geometry",
]
