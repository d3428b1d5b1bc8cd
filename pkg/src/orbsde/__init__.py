"""Discrete-time solver for obliquely reflected BSDEs arising from optimal switching."""

from .condexp import LatticeBackend, RegressionBackend, make_backend
from .errors import (CapacityError, InvalidArgumentError, IterationFailureError,
                     NumericalFailureError, OrbsdeError, ParseError)
from .forward import (LatticeModel, PathEnsemble, build_lattice, dump_ensemble, load_ensemble,
                      simulate_euler)
from .kernels import BACKEND as KERNEL_BACKEND
from .model import (CostStructure, SwitchingProblem, TimeGrid, ValidationReport, build_grids,
                    uniform_grid, validate_costs, validate_problem)
from .projection import in_domain, project, project_with_argmax, structure_margin
from .scheme import (GenericStepInputs, SchemeSolution, backward_step, inputs_from_problem,
                     picard, reflect_step, solve, solve_generic)
from .switching import (Strategy, enumerate_strategies, evaluate_switched,
                        extract_optimal_strategy, random_strategy, snell_check)
from .weights import (WeightFamily, brownian_weights, check_moments, rademacher_weights,
                      truncated_gaussian_weights)

__version__ = "0.1.0"
