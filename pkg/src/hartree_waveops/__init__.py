"""Modified wave operators for long-range Hartree equations, computed on a periodic spectral grid."""
from __future__ import annotations

from .estfun import EstContext, eval_h, eval_h0, eval_N, eval_P, eval_Q, eval_R
from .grid import ModelParams, PhaseField, ProfileField
from .hierarchy import Hierarchy, TimeGrid, solve_hierarchy

__all__ = [
    "EstContext", "eval_h0", "eval_h", "eval_N", "eval_Q", "eval_P", "eval_R",
    "ModelParams", "ProfileField", "PhaseField",
    "TimeGrid", "Hierarchy", "solve_hierarchy",
]
__version__ = "0.1.0"
