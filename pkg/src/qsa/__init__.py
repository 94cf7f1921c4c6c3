"""Stochastic areas on quaternionic spaces: characteristic functions, densities and simulation."""
__version__ = "0.1.0"

from .analytic import (CharFnQuery, Space, char_fn, density, flat_cf, flat_density, hyp_cf,
                       hyp_density, proj_cf_integral, proj_cf_series, proj_density)
from .quat import Quaternion, SU2Element, Su2Vector, su2_exp, su2_log
from .sim import Route, SimConfig, simulate, simulate_radial
from .stats import ecf

__all__ = [
    "CharFnQuery", "Space", "char_fn", "density", "flat_cf", "flat_density", "hyp_cf", "hyp_density",
    "proj_cf_integral", "proj_cf_series", "proj_density", "Quaternion", "SU2Element", "Su2Vector",
    "su2_exp", "su2_log", "Route", "SimConfig", "simulate", "simulate_radial", "ecf",
]
