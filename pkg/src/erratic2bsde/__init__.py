"""Numerical solvers for 2BSDEs with an uncertain terminal horizon.

The package covers the full pipeline: default-time modelling, path
simulation under a finite volatility-measure family, claim decomposition at
the random horizon, regression Monte Carlo BSDE solving, the second-order
envelope layer with its K process, the fully nonlinear PDE route, and the
erratic stochastic control problems built on top.
"""

from .bsde import (BsdeSolution, Driver, JumpBsdeSolution,
                   closed_form_linear_bsde, solve_brownian_bsde,
                   solve_jump_bsde)
from .claims import Claim, decompose_claim, evaluate_claim
from .config import ConfigError, Scenario, load_scenario, parse_scenario
from .control import (ControlSpec, ControlValue, IsaacsReport, check_isaacs,
                      driver_f, estimate_objective, hamiltonian_inf_sup,
                      hamiltonian_sup_sup, solve_control_value,
                      solve_robust_value)
from .default_model import (DefaultSample, IntensityModel, cumulative_hazard,
                            sample_default, sample_defaults,
                            survival_probability)
from .oracles import TreeOracle, ode_oracle, tree_value
from .pde import (FkReport, PdeGrid, PdeSolution, biconjugate_hamiltonian,
                  fk_consistency_check, piecewise_fk_assemble, solve_pde)
from .sde import (Coefficients, MeasureFamily, MeasureSpec, PathBundle,
                  TimeGrid, build_measure_family,
                  estimate_quadratic_variation, simulate_paths)
from .second_order import (ComparisonReport, DppReport, ErraticSolution,
                           MinimalityReport, SecondOrderSolution,
                           assemble_erratic_solution, check_dpp,
                           check_minimality, compare_solutions,
                           simulate_family, solve_auxiliary_2bsde)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # default model
    "IntensityModel", "DefaultSample", "cumulative_hazard",
    "survival_probability", "sample_default", "sample_defaults",
    # sde
    "TimeGrid", "MeasureSpec", "MeasureFamily", "Coefficients", "PathBundle",
    "simulate_paths", "estimate_quadratic_variation", "build_measure_family",
    # claims
    "Claim", "decompose_claim", "evaluate_claim",
    # bsde
    "Driver", "BsdeSolution", "JumpBsdeSolution", "solve_brownian_bsde",
    "solve_jump_bsde", "closed_form_linear_bsde",
    # second order
    "SecondOrderSolution", "ErraticSolution", "MinimalityReport", "DppReport",
    "ComparisonReport", "simulate_family", "solve_auxiliary_2bsde",
    "assemble_erratic_solution", "check_minimality", "check_dpp",
    "compare_solutions",
    # pde
    "PdeGrid", "PdeSolution", "FkReport", "biconjugate_hamiltonian",
    "solve_pde", "piecewise_fk_assemble", "fk_consistency_check",
    # control
    "ControlSpec", "ControlValue", "IsaacsReport", "driver_f",
    "hamiltonian_sup_sup", "hamiltonian_inf_sup", "check_isaacs",
    "solve_control_value", "solve_robust_value", "estimate_objective",
    # oracles
    "TreeOracle", "tree_value", "ode_oracle",
    # config
    "Scenario", "ConfigError", "load_scenario", "parse_scenario",
]
