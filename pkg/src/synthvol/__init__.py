"""synthvol: a synthetic American-option market generator.

Regime-switching return paths (JumpHMM with Student-t copula coupling) drive
a state- and contract-aware mean-reverting variance process whose square root
is the implied volatility; recombining binomial lattices (CRR, Leisen-Reimer)
turn that IV into American option prices, Greeks, and short-premium scenario
P&L. A calibration harness fits the smile/term-structure shape hierarchy
(parametric, global NN, sector NN, per-ticker NN) to option-ladder CSVs.
"""

__version__ = "0.1.0"

from . import calibration, jumphmm, lattice, scenario, surface, variance
from ._kernels import BACKEND as KERNEL_BACKEND

__all__ = [
    "calibration",
    "jumphmm",
    "lattice",
    "scenario",
    "surface",
    "variance",
    "KERNEL_BACKEND",
    "__version__",
]
