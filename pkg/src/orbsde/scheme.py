"""Backward scheme for the discretely and obliquely reflected BSDE.

For ``i = n-1, ..., 0``::

    Z_i  = E[Y_{i+1} H_i | F_i]
    Yt_i = E[Y_{i+1} | F_i] + h_i F_i(Yt_i, Z_i)
    Y_i  = P_i(Yt_i) on reflection dates, Yt_i otherwise

with ``Y_n = Yt_n = xi``.  The implicit middle line is solved by Picard
iteration, which contracts with factor ``h_i L^Y``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, IterationFailureError
from .forward import ScenarioSet
from .model import SwitchingProblem, TimeGrid
from .weights import WeightFamily

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class GenericStepInputs:
    """Inputs of a generic scheme: random generators and costs per date, plus the terminal value.

    ``generators[i]`` is called as ``F_i(ytilde, z)`` with ``ytilde`` of
    shape (N_i, d) and ``z`` of shape (N_i, d, q) and returns (N_i, d);
    component ``j`` may only depend on row ``j`` of ``z``.  ``costs[i]`` is
    an (N_i, d, d) stack (``None`` where the date is not a reflection date)
    and ``terminal`` has shape (N_n, d).
    """

    generators: tuple
    costs: tuple
    terminal: np.ndarray
    lipschitz_y: float = 0.0
    lipschitz_z: float = 0.0

    @property
    def d(self) -> int:
        return self.terminal.shape[1]

    def perturbed(self, zeta_f=0.0, zeta_c=0.0, zeta_xi=0.0) -> "GenericStepInputs":
        """Add ``zeta_f`` to every generator, ``zeta_c`` to off-diagonal costs
        and ``zeta_xi`` to the terminal value (scalars or broadcastable arrays)."""
        gens = self.generators
        if np.any(zeta_f):
            gens = tuple((lambda y, z, F=F: F(y, z) + zeta_f) for F in gens)
        costs = self.costs
        if np.any(zeta_c):
            d = self.d
            off = 1.0 - np.eye(d)
            costs = tuple(None if c is None else c + np.multiply.outer(
                np.ones(c.shape[0]), off) * zeta_c for c in costs)
        return replace(self, generators=gens, costs=costs,
                       terminal=self.terminal + zeta_xi)


def inputs_from_problem(problem: SwitchingProblem, scenario: ScenarioSet) -> GenericStepInputs:
    """Specialise the generic scheme: ``F_i(y, z) = f(X_i, y, z)``, ``C_i = c(X_i)``."""
    grid = scenario.grid
    gens, costs = [], []
    for i in range(grid.n + 1):
        x = scenario.states(i)
        if i < grid.n:
            gens.append(lambda y, z, x=x: problem.f(x, y, z))
        costs.append(problem.cost_matrices(x) if grid.reflection[i] else None)
    return GenericStepInputs(tuple(gens), tuple(costs), problem.g(scenario.states(grid.n)),
                             problem.lipschitz_y, problem.lipschitz_z)


@dataclass(eq=False)
class SchemeSolution:
    """Per-date scheme values; list entry ``i`` is indexed by scenario at ``t_i``.

    ``ytilde[i]``, ``y[i]`` and ``dk[i]`` have shape (N_i, d); ``z[i]``
    (i < n) has shape (N_i, d, q).
    """

    grid: TimeGrid
    ytilde: list
    y: list
    z: list
    dk: list
    probabilities: list
    iterations: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    costs: list | None = None

    @property
    def y0(self) -> np.ndarray:
        return self.probabilities[0] @ self.y[0]

    @property
    def ytilde0(self) -> np.ndarray:
        return self.probabilities[0] @ self.ytilde[0]

    @property
    def z0(self) -> np.ndarray:
        return np.einsum("p,pdq->dq", self.probabilities[0], self.z[0])

    def active(self, i: int) -> np.ndarray:
        """Scenarios at ``t_i`` where the projection moved the value."""
        return np.any(self.dk[i] > 0, axis=1)

    def summary(self) -> dict:
        return {
            "n": self.grid.n,
            "T": self.grid.T,
            "mesh": self.grid.mesh,
            "reflection_mesh": self.grid.reflection_mesh,
            "kappa": self.grid.kappa,
            "y0": self.y0.tolist(),
            "ytilde0": self.ytilde0.tolist(),
            "z0": self.z0.tolist(),
            "picard_iterations": [int(k) for k in self.iterations],
            "projection_activity": [float(self.probabilities[i] @ self.active(i))
                                    for i in range(self.grid.n + 1)],
            **self.diagnostics,
        }

    def aggregates(self) -> list[dict]:
        """Per-date probability-weighted means and standard errors of ``Y``."""
        rows = []
        for i in range(self.grid.n + 1):
            p = self.probabilities[i]
            y = self.y[i]
            mean = p @ y
            n = y.shape[0]
            if n > 1 and not self.diagnostics.get("exact", False):
                se = y.std(axis=0, ddof=1) / math.sqrt(n)
            else:
                se = np.zeros(y.shape[1])
            rows.append({"i": i, "t": float(self.grid.times[i]),
                         "reflection": bool(self.grid.reflection[i]),
                         "y_mean": mean.tolist(), "y_stderr": se.tolist(),
                         "dk_mean": (p @ self.dk[i]).tolist(),
                         "active": float(p @ self.active(i))})
        return rows


def picard(e: np.ndarray, h: float, F: Callable, z: np.ndarray,
           tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Solve ``y = e + h F(y, z)`` by fixed-point iteration started at ``e``.

    Stops at the first iterate whose sup-norm change is at most ``tol``;
    returns ``(y, iterations)``.
    """
    y = e
    residual = math.inf
    for k in range(1, max_iter + 1):
        y_new = e + h * F(y, z)
        residual = float(np.max(np.abs(y_new - y))) if y.size else 0.0
        y = y_new
        if residual <= tol:
            return y, k
    raise IterationFailureError(
        f"Picard iteration did not reach tol={tol:g} in {max_iter} steps "
        f"(last residual {residual:.3e}); check h * L^Y < 1", residual=residual)


def backward_step(i: int, y_next: np.ndarray, weights_i: np.ndarray, backend, generator,
                  h: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """One implicit step: returns ``(ytilde_i, z_i, iterations)``."""
    e = backend.condexp(i, y_next)
    z = backend.condexp(i, y_next[:, :, None] * weights_i[:, None, :])
    try:
        ytilde, its = picard(e, h, generator, z, tol, max_iter)
    except IterationFailureError as exc:
        raise exc.at_time(i) from None
    return ytilde, z, its


def reflect_step(ytilde: np.ndarray, costs, is_reflection: bool):
    """Projection on reflection dates; returns ``(y, dk)`` with ``dk = y - ytilde >= 0``."""
    if not is_reflection:
        return ytilde, np.zeros_like(ytilde)
    y = kernels.project(costs, ytilde)
    return y, y - ytilde


def _check_assumptions(inputs: GenericStepInputs, grid: TimeGrid, weights: WeightFamily):
    if inputs.lipschitz_y and inputs.lipschitz_y * grid.mesh >= 1:
        warnings.warn(f"h * L^Y = {inputs.lipschitz_y * grid.mesh:.3g} >= 1: "
                      "the implicit step may not contract", RuntimeWarning, stacklevel=3)
    if inputs.lipschitz_z and weights.bound() * inputs.lipschitz_z > 1 + 1e-12:
        warnings.warn("sup h|H| L^Z > 1: the scheme may not be monotone",
                      RuntimeWarning, stacklevel=3)


def solve_generic(inputs: GenericStepInputs, scenario: ScenarioSet, weights: WeightFamily,
                  backend, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> SchemeSolution:
    """Run the backward recursion for generic generators and costs."""
    grid = scenario.grid
    n = grid.n
    if len(inputs.generators) != n or len(inputs.costs) != n + 1:
        raise InvalidArgumentError("inputs do not match the time grid")
    if inputs.terminal.shape[0] != scenario.size(n):
        raise InvalidArgumentError("terminal values do not match the scenario set")
    _check_assumptions(inputs, grid, weights)
    ytilde = [None] * (n + 1)
    y = [None] * (n + 1)
    dk = [None] * (n + 1)
    z = [None] * n
    iterations = np.zeros(n, dtype=int)
    xi = np.array(inputs.terminal, dtype=np.float64)
    ytilde[n] = y[n] = xi
    dk[n] = np.zeros_like(xi)
    h = grid.steps
    for i in range(n - 1, -1, -1):
        ytilde[i], z[i], iterations[i] = backward_step(
            i, y[i + 1], weights[i], backend, inputs.generators[i], h[i], tol, max_iter)
        y[i], dk[i] = reflect_step(ytilde[i], inputs.costs[i], bool(grid.reflection[i]))
    probs = [scenario.probabilities(i) for i in range(n + 1)]
    return SchemeSolution(grid, ytilde, y, z, dk, probs, iterations,
                          {"backend": backend.kind, "weights": weights.kind,
                           "exact": bool(scenario.exact)}, list(inputs.costs))


def solve(problem: SwitchingProblem, scenario: ScenarioSet, weights: WeightFamily, backend,
          tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SchemeSolution:
    """Scheme for a switching problem on a forward scenario set."""
    return solve_generic(inputs_from_problem(problem, scenario), scenario, weights, backend,
                         tol, max_iter)


def cumulative_k(solution: SchemeSolution, scenario: ScenarioSet) -> list:
    """``K_i = sum_{1 <= r <= i} dK_r`` per scenario at ``t_i``."""
    k = [np.zeros_like(solution.dk[0])]
    for i in range(1, solution.grid.n + 1):
        k.append(k[-1][scenario.parents(i)] + solution.dk[i])
    return k
