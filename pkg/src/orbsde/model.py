"""Problem definition and grids, with checks of the standing assumptions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import InvalidArgumentError

DEFAULT_EPS = 1e-8
DEFAULT_MEMBERSHIP_TOL = 1e-10


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform-or-not time partition with an embedded reflection grid.

    ``reflection[i]`` flags ``times[i]`` as a reflection date.  The first
    and last dates are always flagged; the scheme itself never projects at
    the terminal date because the terminal value already lies in the domain.
    """

    times: np.ndarray
    reflection: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        refl = _frozen(self.reflection, dtype=bool)
        if times.ndim != 1 or times.size < 2:
            raise InvalidArgumentError("a time grid needs at least two dates")
        if refl.shape != times.shape:
            raise InvalidArgumentError("reflection flags must match the time points")
        if times[0] != 0.0 or not np.all(np.diff(times) > 0):
            raise InvalidArgumentError("times must start at 0 and increase strictly")
        if not (refl[0] and refl[-1]):
            raise InvalidArgumentError("0 and T must both be reflection dates")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "reflection", refl)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n(self) -> int:
        return self.times.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        return float(self.steps.max())

    @property
    def reflection_indices(self) -> np.ndarray:
        return np.flatnonzero(self.reflection)

    @property
    def reflection_mesh(self) -> float:
        return float(np.diff(self.times[self.reflection]).max())

    @property
    def kappa(self) -> int:
        return int(self.reflection.sum())

    def alpha(self) -> float:
        return math.log(2.0 * self.T / self.mesh)


def uniform_grid(n: int, T: float, reflection_every: int = 1) -> TimeGrid:
    """Uniform grid with a reflection date every ``reflection_every`` steps.

    The terminal date is always a reflection date even when ``n`` is not a
    multiple of the stride.
    """
    if n < 1 or T <= 0 or reflection_every < 1:
        raise InvalidArgumentError("need n >= 1 and T > 0 with a positive stride")
    times = np.linspace(0.0, T, n + 1)
    refl = np.zeros(n + 1, dtype=bool)
    refl[::reflection_every] = True
    refl[-1] = True
    return TimeGrid(times, refl)


def build_grids(n: int, T: float, gamma: float = 0.5) -> TimeGrid:
    """Uniform grid of ``n`` steps whose reflection mesh is about ``(T/n)**gamma``.

    The reflection dates are the grid points nearest to a uniform grid of
    ``kappa = round(T / (T/n)**gamma)`` intervals (at least one).  With
    ``gamma=1`` every grid point is a reflection date.
    """
    if n < 2 or T <= 0:
        raise InvalidArgumentError(f"build_grids needs n >= 2 and T > 0, got n={n}, T={T}")
    if not 0 < gamma <= 1:
        raise InvalidArgumentError("gamma must lie in (0, 1]")
    times = np.linspace(0.0, T, n + 1)
    target = (T / n) ** gamma
    intervals = min(n, max(1, int(round(T / target))))
    idx = np.unique(np.rint(np.arange(intervals + 1) * n / intervals).astype(int))
    refl = np.zeros(n + 1, dtype=bool)
    refl[idx] = True
    return TimeGrid(times, refl)


def _column(value, x: np.ndarray, *args) -> np.ndarray:
    n = x.shape[0]
    out = value(x, *args) if callable(value) else value
    return np.broadcast_to(np.asarray(out, dtype=np.float64), (n,))


@dataclass(frozen=True)
class CostStructure:
    """Switching costs ``c^{ij}(x)``; entries are floats or callables of x (N, m)."""

    entries: Sequence[Sequence[float | Callable]]
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        d = len(self.entries)
        if d == 0 or any(len(row) != d for row in self.entries):
            raise InvalidArgumentError("cost entries must form a non-empty square table")
        object.__setattr__(self, "entries", tuple(tuple(row) for row in self.entries))

    @property
    def d(self) -> int:
        return len(self.entries)

    @property
    def is_constant(self) -> bool:
        return not any(callable(c) for row in self.entries for c in row)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Cost matrices at states ``x`` of shape (N, m), returned as (N, d, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n, d = x.shape[0], self.d
        out = np.empty((n, d, d))
        for i, row in enumerate(self.entries):
            for j, c in enumerate(row):
                out[:, i, j] = _column(c, x)
        return out

    @classmethod
    def constant(cls, matrix, eps: float = DEFAULT_EPS) -> "CostStructure":
        return cls([[float(v) for v in row] for row in np.asarray(matrix, dtype=float)], eps)

    def shifted(self, delta: float) -> "CostStructure":
        """Costs with ``delta`` added to every off-diagonal entry."""
        def shift(c):
            if callable(c):
                return lambda x, c=c: c(x) + delta
            return c + delta
        rows = [[c if i == j else shift(c) for j, c in enumerate(row)]
                for i, row in enumerate(self.entries)]
        return CostStructure(rows, self.eps)


@dataclass(frozen=True)
class SwitchingProblem:
    """Forward SDE plus per-mode drivers, terminal values and switching costs.

    ``drift`` is a list of ``m`` scalar coefficient functions, ``diffusion``
    an ``m x q`` table.  ``drivers[j]`` is called as ``f_j(x, y, z_row)``
    with ``x`` (N, m), ``y`` (N, d) and ``z_row`` (N, q): component ``j``
    only ever sees row ``j`` of ``z``.  ``terminal[j]`` maps x (N, m) to
    (N,).  Floats are accepted in place of constant functions.
    """

    m: int
    q: int
    d: int
    drift: Sequence
    diffusion: Sequence[Sequence]
    drivers: Sequence
    terminal: Sequence
    costs: CostStructure
    x0: np.ndarray
    T: float = 1.0
    lipschitz_y: float = 1.0
    lipschitz_z: float = 1.0
    name: str = "problem"

    def __post_init__(self):
        if min(self.m, self.q, self.d) < 1:
            raise InvalidArgumentError("dimensions m, q, d must be positive")
        if len(self.drift) != self.m:
            raise InvalidArgumentError(f"drift needs {self.m} components")
        if len(self.diffusion) != self.m or any(len(r) != self.q for r in self.diffusion):
            raise InvalidArgumentError(f"diffusion must be {self.m} x {self.q}")
        if len(self.drivers) != self.d or len(self.terminal) != self.d:
            raise InvalidArgumentError(f"drivers and terminal need {self.d} components")
        if self.costs.d != self.d:
            raise InvalidArgumentError("cost matrix size differs from component count")
        if not (self.lipschitz_y > 0 and self.lipschitz_z > 0):
            raise InvalidArgumentError("Lipschitz constants must be positive")
        if self.T <= 0:
            raise InvalidArgumentError("horizon T must be positive")
        x0 = _frozen(np.atleast_1d(self.x0))
        if x0.shape != (self.m,):
            raise InvalidArgumentError(f"x0 must have {self.m} entries")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "drift", tuple(self.drift))
        object.__setattr__(self, "diffusion", tuple(tuple(r) for r in self.diffusion))
        object.__setattr__(self, "drivers", tuple(self.drivers))
        object.__setattr__(self, "terminal", tuple(self.terminal))

    def b(self, x: np.ndarray) -> np.ndarray:
        return np.stack([_column(c, x) for c in self.drift], axis=1)

    def sigma(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        out = np.empty((n, self.m, self.q))
        for k, row in enumerate(self.diffusion):
            for l, c in enumerate(row):
                out[:, k, l] = _column(c, x)
        return out

    def f(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Driver for all components; ``z`` has shape (N, d, q)."""
        return np.stack([_column(fj, x, y, z[:, j, :]) for j, fj in enumerate(self.drivers)],
                        axis=1)

    def g(self, x: np.ndarray) -> np.ndarray:
        return np.stack([_column(gj, x) for gj in self.terminal], axis=1)

    def cost_matrices(self, x: np.ndarray) -> np.ndarray:
        return self.costs.evaluate(x)


@dataclass
class ValidationReport:
    """Outcome of a report-only check; ``violations`` is empty on success."""

    name: str
    violations: list = field(default_factory=list)
    checked: int = 0
    min_margin: float = math.inf
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "min_margin": None if math.isinf(self.min_margin) else self.min_margin,
            "violations": self.violations,
            "details": self.details,
        }


def _as_points(sample_points, m=None) -> np.ndarray:
    x = np.asarray(sample_points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if m == 1 or m is None else x[None, :]
    if x.shape[0] == 0:
        raise InvalidArgumentError("sample_points must be non-empty")
    return x


def validate_costs(costs: CostStructure, sample_points, eps: float = DEFAULT_EPS,
                   ) -> ValidationReport:
    """Check the structure condition on the costs at sampled states.

    Component indices in the report are 1-based.
    """
    x = _as_points(sample_points)
    c = costs.evaluate(x)
    d = costs.d
    report = ValidationReport("costs", checked=x.shape[0])
    margin = math.inf
    for s in range(x.shape[0]):
        cs = c[s]
        point = x[s].tolist()
        for i in range(d):
            if cs[i, i] != 0.0:
                report.violations.append(
                    {"kind": "diagonal", "i": i + 1, "value": float(cs[i, i]), "x": point})
            for j in range(d):
                if j == i:
                    continue
                margin = min(margin, cs[i, j])
                if cs[i, j] < eps:
                    report.violations.append(
                        {"kind": "positivity", "i": i + 1, "j": j + 1,
                         "value": float(cs[i, j]), "x": point})
                for l in range(d):
                    if l == j:
                        continue
                    t = cs[i, j] + cs[j, l] - cs[i, l]
                    margin = min(margin, t)
                    if t < eps:
                        report.violations.append(
                            {"kind": "structure", "i": i + 1, "j": j + 1, "l": l + 1,
                             "value": float(t), "x": point})
    report.min_margin = float(margin)
    return report


def _lipschitz_ratios(problem: SwitchingProblem, x: np.ndarray, rng, pairs: int):
    n = x.shape[0]
    d, q = problem.d, problem.q
    xs = np.repeat(x, pairs, axis=0)
    k = xs.shape[0]
    # half the pairs are close (difference quotient), half far apart
    scale = np.where(np.arange(k) % 2 == 0, 1e-3, 1.0)[:, None]
    y = rng.standard_normal((k, d)) * 2.0
    y2 = y + rng.standard_normal((k, d)) * scale
    z = rng.standard_normal((k, d, q)) * 2.0
    z2 = z + rng.standard_normal((k, d, q)) * scale[:, :, None]
    f0 = problem.f(xs, y, z)
    ry = np.linalg.norm(problem.f(xs, y2, z) - f0, axis=1) / np.linalg.norm(y2 - y, axis=1)
    rz = np.linalg.norm(problem.f(xs, y, z2) - f0, axis=1) / np.linalg.norm(
        (z2 - z).reshape(k, -1), axis=1)
    return ry.reshape(n, pairs).max(axis=1), rz.reshape(n, pairs).max(axis=1)


def validate_problem(problem: SwitchingProblem, sample_points, eps: float = DEFAULT_EPS,
                     tol: float = DEFAULT_MEMBERSHIP_TOL, pairs: int = 64,
                     seed: int = 0) -> ValidationReport:
    """Cost structure, terminal membership ``g(x) in Q(x)`` and Lipschitz ratios.

    Lipschitz ratios of ``f`` in ``y`` and ``z`` are estimated from random
    difference quotients and flagged when they exceed the declared constant
    by more than 10%.
    """
    x = _as_points(sample_points, problem.m)
    if x.shape[1] != problem.m:
        raise InvalidArgumentError(f"sample points must have {problem.m} coordinates")
    report = validate_costs(problem.costs, x, eps)
    report.name = "problem"
    c = problem.cost_matrices(x)
    gx = problem.g(x)
    inside = kernels.in_domain(c, gx, tol)
    for s in np.flatnonzero(~inside):
        p = kernels.project(c[s], gx[s])
        worst = int(np.argmax(p - gx[s]))
        report.violations.append(
            {"kind": "terminal", "component": worst + 1, "x": x[s].tolist(),
             "g": gx[s].tolist(), "gap": float(p[worst] - gx[s][worst])})
    rng = np.random.default_rng(seed)
    ry, rz = _lipschitz_ratios(problem, x, rng, pairs)
    for name, ratios, declared in (("lipschitz_y", ry, problem.lipschitz_y),
                                   ("lipschitz_z", rz, problem.lipschitz_z)):
        worst = float(np.nanmax(ratios))
        report.details[name] = {"declared": declared, "estimated": worst}
        if worst > 1.1 * declared:
            report.violations.append({"kind": name, "declared": declared, "estimated": worst})
    report.checked = x.shape[0]
    return report
