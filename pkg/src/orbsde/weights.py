"""Weights ``H_i`` for the control estimate ``Z_i = E[Y_{i+1} H_i | F_i]``."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .forward import LatticeModel, PathEnsemble, ScenarioSet
from .model import ValidationReport


@dataclass(frozen=True, eq=False)
class WeightFamily:
    """Per-interval weights; ``values[i]`` has shape (N_{i+1}, q).

    ``lambdas[i]`` is the scalar with ``h_i E[H_i^T H_i] = lambdas[i] * I``.
    ``R`` is the truncation level (``inf`` for untruncated weights).
    """

    kind: str
    values: tuple
    lambdas: np.ndarray
    steps: np.ndarray
    R: float = math.inf

    def __getitem__(self, i: int) -> np.ndarray:
        return self.values[i]

    def bound(self) -> float:
        """``sup_i h_i |H_i|`` over all intervals and scenarios (Euclidean row norm)."""
        return max(float(h * np.linalg.norm(v, axis=1).max())
                   for h, v in zip(self.steps, self.values))


def truncated_second_moment(a: float) -> float:
    """``E[clip(G, -a, a)**2]`` for a standard Gaussian ``G``."""
    if math.isinf(a):
        return 1.0
    phi = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    inside = math.erf(a / math.sqrt(2.0))          # P(|G| <= a)
    tail = math.erfc(a / math.sqrt(2.0))           # P(|G| > a)
    return inside - 2.0 * a * phi + a * a * tail


def truncated_gaussian_weights(ensemble: PathEnsemble, R: float,
                               lipschitz_z: float | None = None) -> WeightFamily:
    """``H_i = clip(dW_i / h_i, -R/h_i, R/h_i)`` coordinatewise.

    ``lambdas`` come from the closed-form second moment of a truncated
    Gaussian.  A ``RuntimeWarning`` is issued when ``R * lipschitz_z > 1``
    since the scheme then loses its comparison property.
    """
    if not R > 0:
        raise InvalidArgumentError("truncation level R must be positive")
    if lipschitz_z is not None and R * lipschitz_z > 1:
        warnings.warn(f"R * L^Z = {R * lipschitz_z:.3g} > 1: the scheme may not be monotone",
                      RuntimeWarning, stacklevel=2)
    steps = ensemble.grid.steps
    values = []
    for i, h in enumerate(steps):
        v = np.clip(ensemble.increments(i) / h, -R / h, R / h)
        v.setflags(write=False)
        values.append(v)
    lambdas = np.array([truncated_second_moment(R / math.sqrt(h)) for h in steps])
    return WeightFamily("truncated_gaussian", tuple(values), lambdas, steps, float(R))


def rademacher_weights(lattice: LatticeModel) -> WeightFamily:
    """``H_i = dW_i / h_i`` with ``dW_i = +-sqrt(h_i)``; ``lambda_i = 1``."""
    steps = lattice.grid.steps
    values = []
    for i, h in enumerate(steps):
        v = lattice.increments(i) / h
        v.setflags(write=False)
        values.append(v)
    return WeightFamily("rademacher", tuple(values), np.ones(len(steps)), steps)


def brownian_weights(scenario: ScenarioSet) -> WeightFamily:
    """Untruncated ``dW_i / h_i``; mostly useful as a reference."""
    steps = scenario.grid.steps
    values = tuple(scenario.increments(i) / h for i, h in enumerate(steps))
    return WeightFamily("brownian", values, np.ones(len(steps)), steps)


def check_moments(weights: WeightFamily, scenario: ScenarioSet, tol: float = 1e-12,
                  n_se: float = 5.0, lipschitz_z: float | None = None) -> ValidationReport:
    """Check ``E[H_i] = 0``, ``h_i E[H_i^T H_i] = lambda_i I`` and the size bound.

    On an exact lattice the moments are computed as weighted sums and must
    match to ``tol``; on an ensemble each moment must lie within ``n_se``
    standard errors.  When ``lipschitz_z`` is given, ``sup h_i |H_i| L^Z <= 1``
    is also checked.  ``min_margin`` is the worst slack (negative = failure).
    """
    if len(weights.values) != scenario.n:
        raise InvalidArgumentError("weights and scenario have different grids")
    report = ValidationReport("weights", checked=scenario.n)
    worst = math.inf
    deviation = 0.0
    for i, h in enumerate(weights.steps):
        H = weights[i]
        p = scenario.probabilities(i + 1)
        q = H.shape[1]
        mean = p @ H
        second = h * np.einsum("p,pk,pl->kl", p, H, H)
        target = weights.lambdas[i] * np.eye(q)
        if scenario.exact:
            allow_mean = np.full(q, tol)
            allow_second = np.full((q, q), tol)
        else:
            n = H.shape[0]
            allow_mean = n_se * H.std(axis=0, ddof=1) / math.sqrt(n)
            prod = h * H[:, :, None] * H[:, None, :]
            allow_second = n_se * prod.std(axis=0, ddof=1) / math.sqrt(n)
        deviation = max(deviation, float(np.abs(mean).max()),
                        float(np.abs(second - target).max()))
        slack_mean = allow_mean - np.abs(mean)
        slack_second = allow_second - np.abs(second - target)
        worst = min(worst, slack_mean.min(), slack_second.min())
        if (slack_mean < 0).any():
            report.violations.append({"kind": "mean", "interval": i, "value": mean.tolist()})
        if (slack_second < 0).any():
            report.violations.append({"kind": "second_moment", "interval": i,
                                      "value": second.tolist(),
                                      "lambda": float(weights.lambdas[i])})
    report.details["max_deviation"] = deviation
    if lipschitz_z is not None:
        b = weights.bound() * lipschitz_z
        report.details["bound"] = b
        worst = min(worst, 1.0 - b)
        if b > 1.0 + 1e-12:
            report.violations.append({"kind": "bound", "value": b})
    report.min_margin = float(worst)
    return report
