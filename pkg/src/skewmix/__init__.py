"""Numerical laboratory for mixing of torus-extension skew products."""

from .errors import (
    AliasingWarning,
    BudgetExceeded,
    ConfigError,
    NewtonDivergence,
    NonConvergence,
    NotConverged,
    NotExact,
    NotIntegral,
    WindowTooNoisy,
)
from .maps import ExpandingMap, FiberRotation, PreimageWord, periodic_orbits, preimage_tree
from .trig import TrigPoly

__version__ = "0.1.0"
