"""Rate experiments: grid refinement, reflection-grid refinement, driver perturbation.

All runs of one experiment share the configuration seed, so regression
ensembles on nested dyadic grids see the same Brownian paths at common
dates.  Rows are independent solves and may run on several threads
(``ORBSDE_THREADS``); results do not depend on the thread count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError, OrbsdeError
from ..model import uniform_grid
from ..scheme import inputs_from_problem, solve_generic
from .config import ProblemConfig, load_config

ERROR_FLOOR = 1e-13


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("ORBSDE_THREADS", "1")))
    except ValueError:
        raise InvalidArgumentError("ORBSDE_THREADS must be an integer") from None


def _map(fn, items):
    workers = min(thread_count(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def alpha(h: float, T: float) -> float:
    return math.log(2.0 * T / h)


def _solve_on(config: ProblemConfig, grid, seed: int, zeta: float = 0.0, keep: bool = False):
    """Solve on ``grid``; returns ``(y0, stderr, seconds)``, plus the solution if ``keep``."""
    start = time.perf_counter()
    scenario = config.scenario(grid, seed=seed)
    weights = config.weights(scenario)
    backend = config.backend(scenario)
    inputs = inputs_from_problem(config.problem, scenario)
    if zeta:
        inputs = inputs.perturbed(zeta_f=zeta)
    s = config.solver
    sol = solve_generic(inputs, scenario, weights, backend, s["tol"], s["max_iter"])
    if scenario.exact:
        se = 0.0
    else:
        y1 = sol.y[1] if grid.n >= 1 else sol.y[0]
        se = float(np.linalg.norm(y1.std(axis=0, ddof=1)) / math.sqrt(y1.shape[0]))
    out = (sol.y0, se, time.perf_counter() - start)
    return out + (sol,) if keep else out


def z_aggregate(coarse, fine) -> float:
    """``sum_i int_{t_i}^{t_{i+1}} E|Z_fine(s) - Z_i|^2 ds`` on the shared paths.

    ``fine`` stands in for the continuous ``Z``; both grids must be dyadic
    with the coarse dates contained in the fine ones.
    """
    n, nf = coarse.grid.n, fine.grid.n
    ratio = nf // n
    total = 0.0
    for i in range(n):
        zi = coarse.z[i]
        for k in range(i * ratio, (i + 1) * ratio):
            diff = fine.z[k] - zi
            total += fine.grid.steps[k] * float(np.mean(np.sum(diff * diff, axis=(1, 2))))
    return total


def _fit(h, err):
    if len(h) < 2:
        return None, None
    slope, intercept = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope), float(intercept)


@dataclass
class ConvergenceRow:
    n: int
    h: float
    h_r: float
    kappa: int
    y0: np.ndarray
    error: float | None
    stderr: float
    alpha: float
    seconds: float
    reference: bool = False
    failed: str | None = None
    z_error: float | None = None


@dataclass
class ConvergenceTable:
    """Rows sorted by ``n`` plus the least-squares fit of log error on log mesh.

    ``slope`` is ``None`` (printed ``NA``) when fewer than two rows carry a
    non-negligible error, e.g. for schemes that are exact on the benchmark.
    """

    d: int
    T: float
    reference: str
    rows: list = field(default_factory=list)
    slope: float | None = None
    intercept: float | None = None
    with_z: bool = False
    z_slope: float | None = None

    def csv_header(self) -> list[str]:
        return (["n", "h", "hR", "kappa"] + [f"y0_{j + 1}" for j in range(self.d)]
                + ["error", "stderr", "alpha", "seconds"] + (["z_error"] if self.with_z else []))

    def csv_rows(self) -> list[list]:
        return [[r.n, r.h, r.h_r, r.kappa, *np.asarray(r.y0, dtype=float).tolist(),
                 r.error, r.stderr, r.alpha, r.seconds] + ([r.z_error] if self.with_z else [])
                for r in self.rows]

    def to_dict(self) -> dict:
        out = {"reference": self.reference, "slope": self.slope, "intercept": self.intercept,
               "rows": [{"n": r.n, "h": r.h, "hR": r.h_r, "kappa": r.kappa,
                         "y0": np.asarray(r.y0, dtype=float).tolist(), "error": r.error,
                         "stderr": r.stderr, "alpha": r.alpha, "seconds": r.seconds,
                         "reference": r.reference, "failed": r.failed,
                         **({"z_error": r.z_error} if self.with_z else {})}
                        for r in self.rows]}
        if self.with_z:
            out["z_slope"] = self.z_slope
        return out

    @staticmethod
    def _usable(r, value):
        return (not r.reference and r.failed is None and value is not None
                and math.isfinite(value) and value > ERROR_FLOOR)

    def refit(self) -> None:
        pts = [(r.h, r.error) for r in self.rows if self._usable(r, r.error)]
        self.slope, self.intercept = _fit([p[0] for p in pts], [p[1] for p in pts])
        if self.with_z:
            # the aggregate is a squared error; fit its square root
            pts = [(r.h, math.sqrt(r.z_error)) for r in self.rows if self._usable(r, r.z_error)]
            self.z_slope = _fit([p[0] for p in pts], [p[1] for p in pts])[0]


def run_convergence(config: ProblemConfig, n_list, gamma: float | None = 0.5,
                    reference="closed_form", seed: int | None = None,
                    z_error: bool = False) -> ConvergenceTable:
    """Solve for every ``n`` with ``|R| ~ |pi|^gamma`` and tabulate the ``Y_0`` error.

    Parameters
    ----------
    config : ProblemConfig
    n_list : sequence of int
        Distinct step counts; sorted before solving.
    gamma : float or None
        Reflection mesh exponent; ``None`` keeps the configured grid rule.
    reference : {"closed_form", "finest"} or array_like
        ``"closed_form"`` uses the configuration's ``reference`` block,
        ``"finest"`` the largest ``n`` (kept in the table but excluded from
        the fit); a vector is used as given.
    seed : int, optional
        Overrides the configuration seed.
    z_error : bool
        Also report ``sum_i int |Z - Z_i|^2`` against the finest run.  Needs
        the regression backend, ``reference="finest"`` and power-of-two
        ``n`` so that every grid sees the same Brownian paths.

    Returns
    -------
    ConvergenceTable
    """
    n_list = sorted(int(n) for n in n_list)
    if len(set(n_list)) != len(n_list) or not n_list or n_list[0] < 1:
        raise InvalidArgumentError("n_list must hold distinct positive integers")
    if gamma is not None:
        config = _with_gamma(config, gamma)
    seed = config.seed if seed is None else int(seed)
    d, T = config.problem.d, config.problem.T
    if isinstance(reference, str) and reference in ("closed_form", "closed-form"):
        ref = config.reference
        if ref is None:
            raise InvalidArgumentError("closed-form reference requested but config has none")
        label = "closed_form"
    elif isinstance(reference, str) and reference in ("finest", "finest_grid"):
        ref, label = None, "finest"
    else:
        ref = np.asarray(reference, dtype=float)
        if ref.shape != (d,):
            raise InvalidArgumentError(f"reference must have {d} components")
        label = "closed_form"

    if z_error and (label != "finest" or config.backend_kind != "regression"
                    or any(n & (n - 1) for n in n_list)):
        raise InvalidArgumentError(
            "z_error needs a regression config with the finest reference; "
            "every n must be a power of two")

    def one(n, fine=None):
        grid = config.grid(n)
        row = ConvergenceRow(n, grid.mesh, grid.reflection_mesh, grid.kappa,
                             np.full(d, np.nan), None, float("nan"), alpha(grid.mesh, T), 0.0)
        sol = None
        try:
            row.y0, row.stderr, row.seconds, *rest = _solve_on(config, grid, seed,
                                                               keep=z_error)
            sol = rest[0] if rest else None
        except OrbsdeError as exc:
            row.failed = str(exc)
        if fine is not None and sol is not None:
            row.z_error = z_aggregate(sol, fine)
        return row, sol

    if z_error:
        top, fine = one(n_list[-1])
        rows = [r for r, _ in _map(lambda n: one(n, fine), n_list[:-1])] + [top]
        del fine
    else:
        rows = [r for r, _ in _map(one, n_list)]
    if ref is None:
        rows[-1].reference = True
        ref = rows[-1].y0
        if rows[-1].failed is not None:
            ref = np.full(d, np.nan)
    for r in rows:
        if r.failed is None and not r.reference and np.all(np.isfinite(ref)):
            r.error = float(np.linalg.norm(r.y0 - ref))
    table = ConvergenceTable(d, T, label, rows, with_z=z_error)
    table.refit()
    return table


def _with_gamma(config: ProblemConfig, gamma: float) -> ProblemConfig:
    raw = dict(config.raw)
    raw["grid"] = {"n": config.n, "gamma": float(gamma)}
    return load_config(raw)


@dataclass
class RefinementTable:
    """Fixed time grid, reflection stride refined from coarse to fine.

    ``drift[k]`` is ``|Y_0(row k) - Y_0(row k-1)|``; ``rho`` is
    ``|R| log(2T/|R|)``, the rate shape expected for the squared error.
    """

    d: int
    n: int
    strides: list
    h_r: list
    kappa: list
    y0: list
    seconds: list
    T: float

    @property
    def rho(self) -> list[float]:
        return [h * alpha(h, self.T) for h in self.h_r]

    @property
    def drift(self) -> list[float | None]:
        return [None] + [float(np.linalg.norm(self.y0[k] - self.y0[k - 1]))
                         for k in range(1, len(self.y0))]

    def expected_ratio(self, k: int) -> float:
        """Predicted ``drift[k+1] / drift[k]`` from the square-root rate."""
        return math.sqrt(self.rho[k] / self.rho[k - 1]) if k >= 1 else float("nan")

    def check(self, factor: float = 1.2) -> list[dict]:
        """Compare each drift ratio with ``factor`` times the predicted ratio."""
        drift = self.drift
        out = []
        for k in range(1, len(drift) - 1):
            ratio = drift[k + 1] / drift[k] if drift[k] > 0 else math.inf
            bound = factor * self.expected_ratio(k)
            out.append({"from_stride": self.strides[k], "to_stride": self.strides[k + 1],
                        "ratio": ratio, "bound": bound, "passed": ratio <= bound})
        return out

    def csv_header(self) -> list[str]:
        return (["stride", "hR", "kappa"] + [f"y0_{j + 1}" for j in range(self.d)]
                + ["drift", "rho", "seconds"])

    def csv_rows(self) -> list[list]:
        return [[s, h, k, *np.asarray(y, dtype=float).tolist(), dr, r, t]
                for s, h, k, y, dr, r, t in zip(self.strides, self.h_r, self.kappa, self.y0,
                                                self.drift, self.rho, self.seconds)]


def run_refinement(config: ProblemConfig, strides, n: int | None = None,
                   seed: int | None = None) -> RefinementTable:
    """Fix the time grid at ``n`` steps and solve for each reflection stride.

    Strides are processed from coarsest (largest) to finest and must divide ``n``.
    """
    n = config.n if n is None else int(n)
    strides = sorted({int(s) for s in strides}, reverse=True)
    if any(s < 1 or n % s for s in strides):
        raise InvalidArgumentError("every stride must be a positive divisor of n")
    seed = config.seed if seed is None else int(seed)
    T = config.problem.T
    grids = [uniform_grid(n, T, s) for s in strides]
    results = _map(lambda g: _solve_on(config, g, seed), grids)
    return RefinementTable(config.problem.d, n, strides, [g.reflection_mesh for g in grids],
                           [g.kappa for g in grids], [r[0] for r in results],
                           [r[2] for r in results], T)


@dataclass
class PerturbationTable:
    """``Y_0`` under constant driver shifts ``zeta`` against the unperturbed run."""

    d: int
    base: np.ndarray
    zetas: list
    y0: list

    @property
    def deltas(self) -> list[float]:
        return [float(np.linalg.norm(y - self.base)) for y in self.y0]

    def scaling(self) -> list[float]:
        """``|dY_0(zeta)| / |dY_0(zeta_0)| * zeta_0 / zeta``; 1 means exactly linear."""
        d0, z0 = self.deltas[0], self.zetas[0]
        return [(dl / d0) * (z0 / z) if d0 > 0 else float("nan")
                for dl, z in zip(self.deltas, self.zetas)]

    def csv_header(self) -> list[str]:
        return (["zeta"] + [f"y0_{j + 1}" for j in range(self.d)]
                + [f"dy0_{j + 1}" for j in range(self.d)] + ["abs_delta", "scaling"])

    def csv_rows(self) -> list[list]:
        return [[z, *y.tolist(), *(y - self.base).tolist(), dl, s]
                for z, y, dl, s in zip(self.zetas, self.y0, self.deltas, self.scaling())]


def run_perturbation(config: ProblemConfig, zetas, seed: int | None = None) -> PerturbationTable:
    """Re-solve with ``F + zeta`` for each ``zeta`` on the configured grid."""
    zetas = [float(z) for z in zetas]
    if not zetas or any(z == 0 for z in zetas):
        raise InvalidArgumentError("zetas must be non-empty and non-zero")
    seed = config.seed if seed is None else int(seed)
    grid = config.grid()
    runs = _map(lambda z: _solve_on(config, grid, seed, z)[0], [0.0] + zetas)
    return PerturbationTable(config.problem.d, runs[0], zetas, runs[1:])
