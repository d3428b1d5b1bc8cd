"""JSON problem configurations.

A configuration is checked against ``schema.json`` (unknown keys are
rejected), its coefficient expressions are parsed against the declared
dimensions, and it is then turned into the library objects used by the
solver (problem and grid, then scenarios with their weights and backend).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..condexp import make_backend
from ..errors import InvalidArgumentError, ParseError
from ..forward import build_lattice, simulate_euler
from ..model import CostStructure, SwitchingProblem, build_grids, uniform_grid
from ..scheme import DEFAULT_MAX_ITER, DEFAULT_TOL
from ..weights import brownian_weights, rademacher_weights, truncated_gaussian_weights
from .expr import CoefficientExpr

DEFAULT_PATHS = 10_000
DEFAULT_SEED = 0


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files(__package__).joinpath("schema.json").read_text()
    return json.loads(text)


def catalog() -> dict[str, Path]:
    """Named configurations shipped with the package."""
    root = resources.files(__package__).joinpath("configs")
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


class ConfigError(InvalidArgumentError):
    """Configuration does not match the schema or its declared dimensions."""


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    """A validated configuration document.

    Attributes
    ----------
    raw : dict
        The parsed JSON document (a private copy).
    problem : SwitchingProblem
        Problem with coefficients compiled from the expressions.
    """

    raw: dict
    problem: SwitchingProblem

    @property
    def name(self) -> str:
        return self.raw.get("name", "problem")

    @property
    def n(self) -> int:
        return int(self.raw["grid"]["n"])

    @property
    def gamma(self) -> float | None:
        return self.raw["grid"].get("gamma")

    @property
    def backend_kind(self) -> str:
        return self.raw["scenario"]["backend"]

    @property
    def seed(self) -> int:
        return int(self.raw["scenario"].get("seed", DEFAULT_SEED))

    @property
    def n_paths(self) -> int:
        return int(self.raw["scenario"].get("n_paths", DEFAULT_PATHS))

    @property
    def weights_kind(self) -> str:
        default = "rademacher" if self.backend_kind == "lattice" else "truncated_gaussian"
        return self.raw.get("weights", {}).get("kind", default)

    @property
    def R(self) -> float:
        """Truncation level; defaults to ``1 / L^Z`` so that ``R L^Z = 1``."""
        r = self.raw.get("weights", {}).get("R")
        return 1.0 / self.problem.lipschitz_z if r is None else float(r)

    @property
    def solver(self) -> dict:
        s = self.raw.get("solver", {})
        return {"tol": float(s.get("tol", DEFAULT_TOL)),
                "max_iter": int(s.get("max_iter", DEFAULT_MAX_ITER)),
                "basis_degree": int(s.get("basis_degree", 3)),
                "ridge": float(s.get("ridge", 1e-10))}

    @property
    def reference(self) -> np.ndarray | None:
        ref = self.raw.get("reference")
        return None if ref is None else np.asarray(ref["y0"], dtype=float)

    def with_overrides(self, **changes) -> "ProblemConfig":
        """Copy with top-level sections patched, e.g. ``grid={"n": 32}``."""
        raw = copy.deepcopy(self.raw)
        for key, value in changes.items():
            if isinstance(value, dict) and isinstance(raw.get(key), dict):
                raw[key].update(value)
            else:
                raw[key] = value
        if "n" in changes.get("grid", {}) and "reflection_every" in raw["grid"]:
            raw["grid"]["reflection_every"] = min(raw["grid"]["reflection_every"],
                                                  raw["grid"]["n"])
        return load_config(raw)

    def grid(self, n: int | None = None):
        n = self.n if n is None else int(n)
        rule = self.raw["grid"]
        T = self.problem.T
        if "gamma" in rule:
            return build_grids(n, T, float(rule["gamma"]))
        return uniform_grid(n, T, int(rule.get("reflection_every", 1)))

    def scenario(self, grid=None, seed: int | None = None, n_paths: int | None = None):
        grid = self.grid() if grid is None else grid
        if self.backend_kind == "lattice":
            return build_lattice(self.problem, grid)
        return simulate_euler(self.problem, grid, self.n_paths if n_paths is None else n_paths,
                              self.seed if seed is None else seed)

    def weights(self, scenario):
        kind = self.weights_kind
        if kind == "rademacher":
            if self.backend_kind != "lattice":
                raise ConfigError("rademacher weights need the lattice backend")
            return rademacher_weights(scenario)
        if kind == "truncated_gaussian":
            if self.backend_kind != "regression":
                raise ConfigError("truncated_gaussian weights need the regression backend")
            return truncated_gaussian_weights(scenario, self.R, self.problem.lipschitz_z)
        return brownian_weights(scenario)

    def backend(self, scenario):
        s = self.solver
        return make_backend(scenario, s["basis_degree"], s["ridge"])

    def sample_points(self, count: int = 256, seed: int = 0) -> np.ndarray:
        """States spread around ``x0`` at the scale of the horizon, for validation."""
        rng = np.random.default_rng(seed)
        p = self.problem
        spread = 2.0 * math.sqrt(p.T) * (1.0 + np.abs(p.x0))
        return p.x0 + spread * rng.standard_normal((count, p.m))


def _coef(value, names, where):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    try:
        return CoefficientExpr(value, names)
    except ParseError as exc:
        raise ParseError(f"{where}: {exc.message}", exc.source, exc.offset) from None


def _check_len(seq, n, where):
    if len(seq) != n:
        raise ConfigError(f"{where} must have {n} entries, got {len(seq)}")


def load_config(source) -> ProblemConfig:
    """Load a configuration from a path or JSON string, or from a dict.

    Raises
    ------
    ConfigError
        Schema violation or dimension mismatch.
    ParseError
        A coefficient expression is malformed; the message names the field.
    """
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            path = Path(text)
            try:
                text = path.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: "
                              f"{exc.msg}") from exc
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None

    m, q, d = (int(raw["dims"][k]) for k in ("m", "q", "d"))
    xs = [f"x{k + 1}" for k in range(m)]
    full = xs + [f"y{k + 1}" for k in range(d)] + [f"z{k + 1}" for k in range(q)]
    _check_len(raw["x0"], m, "x0")
    _check_len(raw["b"], m, "b")
    _check_len(raw["sigma"], m, "sigma")
    for k, row in enumerate(raw["sigma"]):
        _check_len(row, q, f"sigma[{k}]")
    _check_len(raw["f"], d, "f")
    _check_len(raw["g"], d, "g")
    _check_len(raw["c"], d, "c")
    for k, row in enumerate(raw["c"]):
        _check_len(row, d, f"c[{k}]")
    if raw.get("reference") is not None:
        _check_len(raw["reference"]["y0"], d, "reference.y0")
    grid = raw["grid"]
    if grid.get("reflection_every", 1) > grid["n"]:
        raise ConfigError("grid.reflection_every cannot exceed grid.n")

    problem = SwitchingProblem(
        m=m, q=q, d=d,
        drift=[_coef(v, xs, f"b[{k}]") for k, v in enumerate(raw["b"])],
        diffusion=[[_coef(v, xs, f"sigma[{k}][{l}]") for l, v in enumerate(row)]
                   for k, row in enumerate(raw["sigma"])],
        drivers=[_coef(v, full, f"f[{j}]") for j, v in enumerate(raw["f"])],
        terminal=[_coef(v, xs, f"g[{j}]") for j, v in enumerate(raw["g"])],
        costs=CostStructure([[_coef(v, xs, f"c[{i}][{j}]") for j, v in enumerate(row)]
                             for i, row in enumerate(raw["c"])]),
        x0=np.asarray(raw["x0"], dtype=float),
        T=float(raw["T"]),
        lipschitz_y=float(raw["lipschitz"]["y"]),
        lipschitz_z=float(raw["lipschitz"]["z"]),
        name=raw.get("name", "problem"),
    )
    return ProblemConfig(raw, problem)
