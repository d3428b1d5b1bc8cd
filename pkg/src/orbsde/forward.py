"""Forward scenarios: Euler Monte Carlo ensembles and exact binary lattices.

Both scenario types expose the same per-date view used by the backward
scheme: ``states(i)`` of shape (N_i, m), ``increments(i)`` of shape
(N_{i+1}, q) holding the Brownian increment of interval ``i`` on every
scenario at ``t_{i+1}``, ``parents(i)`` mapping scenarios at ``t_i`` to
their ancestor at ``t_{i-1}``, and ``probabilities(i)``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidArgumentError
from .model import SwitchingProblem, TimeGrid

DEFAULT_MEMORY_BUDGET = 2 * 1024**3
LATTICE_MAX_LEVEL_BITS = 22

_MAGIC = b"ORBSDEPE"
_VERSION = 1


class ScenarioSet:
    grid: TimeGrid
    exact: bool = False

    @property
    def n(self) -> int:
        return self.grid.n

    def size(self, i: int) -> int:
        return self.states(i).shape[0]

    def states(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def increments(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def parents(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def probabilities(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def ancestors(self, i: int, k: int) -> np.ndarray:
        """Indices at ``t_k`` of the ancestors of every scenario at ``t_i`` (k <= i)."""
        idx = np.arange(self.size(i))
        for level in range(i, k, -1):
            idx = self.parents(level)[idx]
        return idx


@dataclass(frozen=True, eq=False)
class PathEnsemble(ScenarioSet):
    """Monte Carlo paths of the Euler scheme.

    ``paths`` has shape (n+1, N, m) and ``dw`` shape (n, N, q).
    """

    grid: TimeGrid
    paths: np.ndarray
    dw: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return self.paths.shape[1]

    def size(self, i: int) -> int:
        return self.paths.shape[1]

    def states(self, i: int) -> np.ndarray:
        return self.paths[i]

    def increments(self, i: int) -> np.ndarray:
        return self.dw[i]

    def parents(self, i: int) -> np.ndarray:
        return np.arange(self.paths.shape[1])

    def probabilities(self, i: int) -> np.ndarray:
        n = self.paths.shape[1]
        return np.full(n, 1.0 / n)


@dataclass(frozen=True, eq=False)
class LatticeModel(ScenarioSet):
    """Non-recombining tree with ``2**q`` equally likely children per node.

    Child ``b`` of node ``k`` at ``t_i`` is node ``k * 2**q + b`` at
    ``t_{i+1}``; bit ``l`` of ``b`` is the sign of Brownian coordinate
    ``l`` (0 for ``-sqrt(h_i)``, 1 for ``+sqrt(h_i)``).
    """

    grid: TimeGrid
    levels: tuple
    dws: tuple
    q: int
    exact = True

    @property
    def branching(self) -> int:
        return 2**self.q

    def states(self, i: int) -> np.ndarray:
        return self.levels[i]

    def increments(self, i: int) -> np.ndarray:
        return self.dws[i]

    def parents(self, i: int) -> np.ndarray:
        return np.arange(self.levels[i].shape[0]) // self.branching

    def probabilities(self, i: int) -> np.ndarray:
        n = self.levels[i].shape[0]
        return np.full(n, 1.0 / n)

    @property
    def node_count(self) -> int:
        return sum(level.shape[0] for level in self.levels)


def _normals(seed: int, row: int, n_paths: int, q: int) -> np.ndarray:
    # one independent stream per counter row; paths are a prefix of each row
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(row),))
    return np.random.Generator(np.random.Philox(ss)).standard_normal((n_paths, q))


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def brownian_increments(grid: TimeGrid, n_paths: int, q: int, seed: int) -> np.ndarray:
    """Brownian increments of shape (n, N, q) with common random numbers.

    When ``n`` is a power of two the path is built by dyadic Brownian-bridge
    refinement: counter row 0 draws ``W_T``, row ``r >= 1`` fills the
    ``r``-th midpoint in breadth-first order.  Grids with ``n' < n`` points
    then reuse a prefix of the rows and see the same Brownian values at
    their dates.  Otherwise row ``i`` draws the increment of interval ``i``.
    """
    n = grid.n
    t = grid.times
    if not _is_power_of_two(n):
        h = grid.steps
        return np.stack([np.sqrt(h[i]) * _normals(seed, i, n_paths, q) for i in range(n)])
    w = np.zeros((n + 1, n_paths, q))
    w[n] = np.sqrt(t[n]) * _normals(seed, 0, n_paths, q)
    row = 1
    span = n
    while span > 1:
        half = span // 2
        for a in range(0, n, span):
            b, mid = a + span, a + half
            ta, tb, tm = t[a], t[b], t[mid]
            mean = w[a] + (tm - ta) / (tb - ta) * (w[b] - w[a])
            std = np.sqrt((tm - ta) * (tb - tm) / (tb - ta))
            w[mid] = mean + std * _normals(seed, row, n_paths, q)
            row += 1
        span = half
    return np.diff(w, axis=0)


def simulate_euler(problem: SwitchingProblem, grid: TimeGrid, n_paths: int, seed: int = 0,
                   memory_budget: int = DEFAULT_MEMORY_BUDGET) -> PathEnsemble:
    """Simulate ``n_paths`` Euler paths of the forward SDE on ``grid``."""
    if n_paths < 1:
        raise InvalidArgumentError("n_paths must be at least 1")
    n, m, q = grid.n, problem.m, problem.q
    need = 8 * n_paths * ((n + 1) * m + 2 * n * q)
    if need > memory_budget:
        raise CapacityError(
            f"ensemble of {n_paths} paths x {n} steps needs {need} bytes "
            f"(budget {memory_budget})")
    dw = brownian_increments(grid, n_paths, q, seed)
    h = grid.steps
    paths = np.empty((n + 1, n_paths, m))
    paths[0] = problem.x0
    for i in range(n):
        x = paths[i]
        paths[i + 1] = x + problem.b(x) * h[i] + np.einsum("pkl,pl->pk", problem.sigma(x), dw[i])
    paths.setflags(write=False)
    dw.setflags(write=False)
    return PathEnsemble(grid, paths, dw, int(seed))


def build_lattice(problem: SwitchingProblem, grid: TimeGrid) -> LatticeModel:
    """Binary-per-coordinate Euler tree with increments ``+-sqrt(h_i)``."""
    q, n, m = problem.q, grid.n, problem.m
    if q * n > LATTICE_MAX_LEVEL_BITS:
        raise CapacityError(
            f"lattice with q*n = {q * n} exceeds the 2**{LATTICE_MAX_LEVEL_BITS} node budget")
    branch = 2**q
    signs = np.array([[1.0 if (b >> l) & 1 else -1.0 for l in range(q)] for b in range(branch)])
    levels = [np.array(problem.x0, dtype=np.float64)[None, :]]
    dws = []
    for i, h in enumerate(grid.steps):
        x = levels[-1]
        nodes = x.shape[0]
        dw = np.tile(signs * np.sqrt(h), (nodes, 1))
        xp = np.repeat(x, branch, axis=0)
        sig = np.repeat(problem.sigma(x), branch, axis=0)
        drift = np.repeat(problem.b(x), branch, axis=0)
        levels.append(xp + drift * h + np.einsum("pkl,pl->pk", sig, dw))
        dws.append(dw)
    for a in levels + dws:
        a.setflags(write=False)
    return LatticeModel(grid, tuple(levels), tuple(dws), q)


def dump_ensemble(ensemble: PathEnsemble, path) -> None:
    """Write an ensemble as header + row-major little-endian float64 body.

    Layout: 8-byte magic, uint32 version, uint32 header length, UTF-8 JSON
    header (dims, seed, grid), then ``paths`` (n+1, N, m) and ``dw``
    (n, N, q).
    """
    n1, n_paths, m = ensemble.paths.shape
    q = ensemble.dw.shape[2]
    header = json.dumps({
        "n": n1 - 1, "n_paths": n_paths, "m": m, "q": q, "seed": ensemble.seed,
        "times": [float(t) for t in ensemble.grid.times],
        "reflection": [bool(r) for r in ensemble.grid.reflection],
    }).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<II", _VERSION, len(header)) + header)
            fh.write(np.ascontiguousarray(ensemble.paths, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(ensemble.dw, dtype="<f8").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write ensemble to {path}: {exc}") from exc


def load_ensemble(path) -> PathEnsemble:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _MAGIC:
        raise InvalidArgumentError(f"{path} is not an ensemble dump")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != _VERSION:
        raise InvalidArgumentError(f"unsupported ensemble dump version {version}")
    meta = json.loads(blob[16:16 + hlen])
    n, n_paths, m, q = meta["n"], meta["n_paths"], meta["m"], meta["q"]
    body = np.frombuffer(blob, dtype="<f8", offset=16 + hlen)
    split = (n + 1) * n_paths * m
    paths = body[:split].reshape(n + 1, n_paths, m).astype(np.float64)
    dw = body[split:].reshape(n, n_paths, q).astype(np.float64)
    grid = TimeGrid(np.array(meta["times"]), np.array(meta["reflection"]))
    paths.setflags(write=False)
    dw.setflags(write=False)
    return PathEnsemble(grid, paths, dw, int(meta["seed"]))
