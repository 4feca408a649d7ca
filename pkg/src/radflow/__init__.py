"""Numerical laboratory for a barotropic radiative flow model and its diffusive limits."""

from .errors import *  # noqa: F401,F403
from .params import (CouplingFunctions, EpsilonFamily, PhysicalParams, Regime, RegimeLabel,
                     classify_regime, stability_margin)

__all__ = ["CouplingFunctions", "EpsilonFamily", "PhysicalParams", "Regime", "RegimeLabel",
           "classify_regime", "stability_margin"]
__version__ = "0.1.0"
