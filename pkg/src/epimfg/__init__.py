"""Numerical solvers for epidemic activity choice under asymptomatic uncertainty.

Subpackage map:

- ``params``          rates, costs, closed-form state values
- ``fully_observed``  single-agent solution and population flow with full information
- ``belief``          pre-symptom belief filter on the (S, A, R) simplex
- ``trigrid``         shared raster of the belief triangle
- ``hjb``             belief-space HJB solver (method of lines) and policy extraction
- ``fpk``             population belief-density transport and symptomatic branch
- ``mfe``             best-response / population-response fixed-point loop
- ``agents``          exact-event Monte Carlo oracle
- ``cli``             scenario-driven experiment runner
"""

from epimfg.params import (
    Attribute,
    CostTable,
    DEFAULT_PARAMS,
    EpiState,
    ModelParams,
    phi_bar_a,
    phi_bar_i,
    r_nought,
    running_cost,
)

__all__ = [
    "Attribute",
    "CostTable",
    "DEFAULT_PARAMS",
    "EpiState",
    "ModelParams",
    "phi_bar_a",
    "phi_bar_i",
    "r_nought",
    "running_cost",
]

__version__ = "0.1.0"
