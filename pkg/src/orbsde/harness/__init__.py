"""Configuration loading, the command line and rate experiments."""

from .config import ConfigError, ProblemConfig, catalog, load_config
from .convergence import (ConvergenceTable, PerturbationTable, RefinementTable,
                          run_convergence, run_perturbation, run_refinement)
from .export import export, load_json
from .expr import CoefficientExpr, evaluate, parse_expression, to_source
