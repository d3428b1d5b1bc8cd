"""Discrete switching strategies and their switched backward schemes.

A strategy starting from mode ``j`` at date ``t_i`` is an adapted policy:
on every reflection date ``t_k`` with ``k > i`` and every scenario node it
maps the current mode to a target mode (the current mode meaning "stay").
Several instantaneous switches at one node are followed up to
``max_switches``.  Switching is not allowed at the start date itself, so
that the value of the optimal strategy matches the unprojected scheme
component ``Yt_i^j``.

The switched scheme for a strategy ``a`` is evaluated with the pre-decision
value ``W_k = U_k - (costs paid at t_k)``::

    V_k = E[W_{k+1} H_k | F_k],   U_k = E[W_{k+1} | F_k] + h_k F_k^{a_k}(V_k)

where ``a_k`` is the mode after the decisions at ``t_k``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CapacityError, InvalidArgumentError
from .forward import ScenarioSet
from .scheme import GenericStepInputs, SchemeSolution
from .weights import WeightFamily

ENUMERATION_BUDGET = 10**6
SNELL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Strategy:
    """Adapted switching policy; ``decisions[k]`` is an (N_k, d) array of target modes."""

    start: tuple
    d: int
    decisions: dict = field(default_factory=dict)
    max_switches: int = 1

    def validate(self, scenario: ScenarioSet) -> None:
        i, j = self.start
        grid = scenario.grid
        if not (0 <= i <= grid.n and 0 <= j < self.d):
            raise InvalidArgumentError(f"start {self.start} outside the grid or mode range")
        for k, dec in self.decisions.items():
            dec = np.asarray(dec)
            if dec.shape != (scenario.size(k), self.d):
                raise InvalidArgumentError(f"decisions at t_{k} have shape {dec.shape}")
            if dec.min() < 0 or dec.max() >= self.d:
                raise InvalidArgumentError(f"decisions at t_{k} name an unknown mode")
            moves = np.any(dec != np.arange(self.d), axis=None)
            if moves and (k <= i or not grid.reflection[k]):
                raise InvalidArgumentError(
                    f"strategy switches at t_{k}, which is not a reflection date after "
                    f"the start date t_{i}")

    def to_rows(self) -> list[dict]:
        """Decision table as rows (time, node, mode_in, mode_out), modes 1-based."""
        rows = []
        for k in sorted(self.decisions):
            dec = self.decisions[k]
            for node in range(dec.shape[0]):
                for mode in range(self.d):
                    rows.append({"time": k, "node": node, "mode_in": mode + 1,
                                 "mode_out": int(dec[node, mode]) + 1})
        return rows


@dataclass(eq=False)
class Realization:
    """Processes induced by a strategy along each scenario.

    Lists are indexed by ``k - start`` for dates ``t_k`` with ``k >= start``.
    """

    start: int
    mode_in: list
    mode_out: list
    paid: list
    switches: list
    cumulative_cost: list
    cumulative_switches: list


def realize(strategy: Strategy, scenario: ScenarioSet, costs) -> Realization:
    """Run the policy forward from its start date on every scenario."""
    strategy.validate(scenario)
    i, j = strategy.start
    mode = np.full(scenario.size(i), j, dtype=np.intp)
    out = Realization(i, [], [], [], [], [], [])
    a_prev = n_prev = None
    for k in range(i, scenario.n + 1):
        if k > i:
            par = scenario.parents(k)
            mode = out.mode_out[-1][par]
            a_prev, n_prev = out.cumulative_cost[-1][par], out.cumulative_switches[-1][par]
        size = mode.shape[0]
        dec = strategy.decisions.get(k)
        if dec is not None and k > i:
            if costs[k] is None:
                raise InvalidArgumentError(f"no cost matrices available at t_{k}")
            m_out, paid, count = kernels.apply_switch_chain(dec, mode, costs[k],
                                                            strategy.max_switches)
        else:
            m_out, paid, count = mode, np.zeros(size), np.zeros(size, dtype=np.intp)
        out.mode_in.append(mode)
        out.mode_out.append(np.asarray(m_out))
        out.paid.append(np.asarray(paid))
        out.switches.append(np.asarray(count))
        out.cumulative_cost.append(paid if a_prev is None else a_prev + paid)
        out.cumulative_switches.append(count if n_prev is None else n_prev + count)
    return out


def switch_sequence(strategy: Strategy, scenario: ScenarioSet, k: int, node: int):
    """Path-wise view ``[(theta_r, alpha_r)]`` for the scenario ``node`` at ``t_k``.

    The first entry is the start ``(i, j)``; every switch, instantaneous ones
    included, adds an entry.
    """
    i, j = strategy.start
    if k < i:
        raise InvalidArgumentError("node lies before the start date")
    path = [node]
    for level in range(k, i, -1):
        path.append(int(scenario.parents(level)[path[-1]]))
    path.reverse()                       # node index at t_i, ..., t_k
    seq = [(i, j)]
    mode = j
    for level, idx in zip(range(i, k + 1), path):
        dec = strategy.decisions.get(level)
        if dec is None or level == i:
            continue
        for _ in range(strategy.max_switches):
            target = int(dec[idx, mode])
            if target == mode:
                break
            mode = target
            seq.append((level, mode))
    return seq


@dataclass(eq=False)
class SwitchedValue:
    """``u[k - start]`` (N_k,) post-decision values, ``v`` the matching (N_k, q)
    control, ``w`` the pre-decision values ``u - paid``."""

    start: tuple
    u: list
    v: list
    w: list
    realization: Realization

    @property
    def value(self) -> np.ndarray:
        """Value per node at the start date."""
        return self.u[0]


def _frozen_generator(inputs: GenericStepInputs, solution: SchemeSolution | None, k: int):
    F = inputs.generators[k]
    if solution is not None:
        y = solution.ytilde[k]
    else:
        y = None

    def per_mode(v: np.ndarray, d: int) -> np.ndarray:
        z = np.broadcast_to(v[:, None, :], (v.shape[0], d, v.shape[1]))
        yy = np.zeros((v.shape[0], d)) if y is None else y
        return F(yy, z)
    return per_mode


def evaluate_switched(inputs: GenericStepInputs, scenario: ScenarioSet, weights: WeightFamily,
                      backend, strategy: Strategy,
                      solution: SchemeSolution | None = None) -> SwitchedValue:
    """One-dimensional switched backward scheme for ``strategy``.

    With a y-dependent generator ``F_k(y, z)``, ``solution`` supplies the
    frozen ``Yt_k`` so that ``F_k^m(v) = F_k(Yt_k, z)^m`` with every row of
    ``z`` equal to ``v``; the switched scheme is then explicit.
    """
    d = inputs.d
    if strategy.d != d:
        raise InvalidArgumentError("strategy and inputs have different mode counts")
    real = realize(strategy, scenario, inputs.costs)
    i = strategy.start[0]
    n = scenario.n
    h = scenario.grid.steps
    u = [None] * (n - i + 1)
    v = [None] * (n - i)
    w = [None] * (n - i + 1)
    last = n - i
    u[last] = inputs.terminal[np.arange(scenario.size(n)), real.mode_out[last]]
    w[last] = u[last] - real.paid[last]
    for k in range(n - 1, i - 1, -1):
        r = k - i
        nxt = w[r + 1]
        v[r] = backend.condexp(k, nxt[:, None] * weights[k])
        e = backend.condexp(k, nxt)
        Fk = _frozen_generator(inputs, solution, k)(v[r], d)
        mode = real.mode_out[r]
        u[r] = e + h[k] * Fk[np.arange(mode.shape[0]), mode]
        w[r] = u[r] - real.paid[r]
    return SwitchedValue(strategy.start, u, v, w, real)


def extract_optimal_strategy(solution: SchemeSolution, scenario: ScenarioSet, start,
                             costs=None, max_switches: int | None = None) -> Strategy:
    """Switch from ``a`` when ``Yt^a <= max_{m != a} (Yt^m - C^{am})``, to the
    smallest maximiser, on every reflection date after the start."""
    costs = solution.costs if costs is None else costs
    if costs is None:
        raise InvalidArgumentError("cost matrices are needed to extract a strategy")
    i, j = start
    d = solution.ytilde[0].shape[1]
    decisions = {}
    for k in range(i + 1, solution.grid.n + 1):
        if not solution.grid.reflection[k]:
            continue
        yt = solution.ytilde[k]
        best, arg = kernels.best_switch(costs[k], yt)
        stay = np.broadcast_to(np.arange(d), yt.shape)
        decisions[k] = np.where(yt <= best, arg, stay).astype(np.intp)
    return Strategy((i, j), d, decisions, d - 1 if max_switches is None else max_switches)


def _decision_slots(scenario: ScenarioSet, start: int):
    grid = scenario.grid
    return [(k, scenario.size(k)) for k in range(start + 1, grid.n + 1) if grid.reflection[k]]


def count_strategies(scenario: ScenarioSet, start, d: int, max_switches: int = 1) -> int:
    if max_switches == 0:
        return 1
    pairs = sum(size * d for _, size in _decision_slots(scenario, start[0]))
    return d**pairs


def enumerate_strategies(scenario: ScenarioSet, start, d: int, max_switches: int = 1,
                         budget: int = ENUMERATION_BUDGET):
    """Yield every adapted reflection-admissible policy from ``start``.

    Each (reflection node, current mode) pair independently chooses one of
    the ``d`` modes, so there are ``d ** pairs`` policies.
    """
    i, j = start
    if max_switches == 0:
        yield Strategy((i, j), d, {}, 0)
        return
    total = count_strategies(scenario, start, d, max_switches)
    if total > budget:
        raise CapacityError(f"{total} strategies exceed the enumeration budget {budget}")
    slots = _decision_slots(scenario, i)
    shapes = [(k, size) for k, size in slots]
    pairs = sum(size * d for _, size in shapes)
    for choice in itertools.product(range(d), repeat=pairs):
        flat = np.asarray(choice, dtype=np.intp)
        decisions, pos = {}, 0
        for k, size in shapes:
            decisions[k] = flat[pos:pos + size * d].reshape(size, d)
            pos += size * d
        yield Strategy((i, j), d, decisions, max_switches)


def random_strategy(scenario: ScenarioSet, start, d: int, rng, switch_prob: float = 0.3,
                    max_switches: int = 1) -> Strategy:
    """Policy that switches with probability ``switch_prob`` to a uniform other mode."""
    decisions = {}
    for k, size in _decision_slots(scenario, start[0]):
        stay = np.broadcast_to(np.arange(d), (size, d))
        other = (stay + rng.integers(1, d, size=(size, d))) % d if d > 1 else stay
        move = rng.random((size, d)) < switch_prob
        decisions[k] = np.where(move, other, stay).astype(np.intp)
    return Strategy(tuple(start), d, decisions, max_switches)


@dataclass
class SnellReport:
    start: tuple
    exact: bool
    n_strategies: int
    enumerated: bool
    domination_margin: float
    optimality_gap: float
    enumeration_gap: float | None
    tol: float = SNELL_TOL
    domination_tol: float = SNELL_TOL
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        ok = self.domination_margin >= -self.domination_tol
        if self.exact:
            ok = ok and self.optimality_gap <= self.tol
            if self.enumeration_gap is not None:
                ok = ok and self.enumeration_gap <= self.tol
        return bool(ok)

    def to_dict(self) -> dict:
        return {
            "start": [int(self.start[0]), int(self.start[1]) + 1],
            "exact": self.exact,
            "n_strategies": self.n_strategies,
            "enumerated": self.enumerated,
            "domination_margin": self.domination_margin,
            "optimality_gap": self.optimality_gap,
            "enumeration_gap": self.enumeration_gap,
            "tol": self.tol,
            "domination_tol": self.domination_tol,
            "passed": self.passed,
            **self.details,
        }


def snell_check(solution: SchemeSolution, inputs: GenericStepInputs, scenario: ScenarioSet,
                weights: WeightFamily, backend, start=(0, 0), sample: int = 1000,
                seed: int = 0, enumerate_budget: int = 10**5, max_switches: int = 1,
                tol: float = SNELL_TOL) -> SnellReport:
    """Compare ``Yt_i^j`` with switched-scheme values.

    (a) domination over every enumerated policy, or over ``sample`` random
    ones when enumeration exceeds ``enumerate_budget``; (b) the gap of the
    extracted optimal policy; (c) the gap to the enumerated maximum.  On a
    regression backend only (a) is judged, at three standard errors.
    """
    i, j = start
    d = inputs.d
    target = solution.ytilde[i][:, j]
    exact = bool(scenario.exact)
    total = count_strategies(scenario, start, d, max_switches)
    enumerated = total <= enumerate_budget
    if enumerated:
        strategies = enumerate_strategies(scenario, start, d, max_switches, enumerate_budget)
    else:
        rng = np.random.default_rng(seed)
        strategies = (random_strategy(scenario, start, d, rng, max_switches=max_switches)
                      for _ in range(sample))
    margin = math.inf
    best = np.full(target.shape, -math.inf)
    count = 0
    for strat in strategies:
        val = evaluate_switched(inputs, scenario, weights, backend, strat, solution)
        if exact:
            margin = min(margin, float(np.min(target - val.value)))
        else:
            # pathwise spread of the next-date difference drives the estimator noise
            diff = solution.y[i + 1][:, j] - val.w[1] if i < scenario.n else np.zeros(1)
            se = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
            margin = min(margin, float(np.min(target - val.value)) + 3.0 * se)
        best = np.maximum(best, val.value)
        count += 1
    opt = extract_optimal_strategy(solution, scenario, start, inputs.costs)
    opt_val = evaluate_switched(inputs, scenario, weights, backend, opt, solution)
    gap = float(np.max(np.abs(target - opt_val.value)))
    enum_gap = float(np.max(np.abs(target - best))) if enumerated and exact else None
    return SnellReport(tuple(start), exact, count, enumerated, margin, gap, enum_gap,
                       tol=tol, domination_tol=tol,
                       details={"switches_optimal_mean": float(
                           np.mean(opt_val.realization.cumulative_switches[-1]))})
