"""Conditional expectations ``E[. | F_{t_i}]`` on a scenario set."""

from __future__ import annotations

import itertools
from collections import OrderedDict

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import InvalidArgumentError, NumericalFailureError
from .forward import LatticeModel, PathEnsemble

DEFAULT_DEGREE = 3
DEFAULT_RIDGE = 1e-10


class LatticeBackend:
    """Exact conditional expectation: average over the children of each node."""

    kind = "exact_lattice"

    def __init__(self, lattice: LatticeModel):
        self.scenario = lattice
        self._branch = lattice.branching

    def condexp(self, i: int, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        nodes = self.scenario.size(i)
        if values.shape[0] != nodes * self._branch:
            raise InvalidArgumentError(
                f"expected {nodes * self._branch} values at t_{i + 1}, got {values.shape[0]}")
        return values.reshape(nodes, self._branch, *values.shape[1:]).mean(axis=1)


def monomial_exponents(m: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of all monomials in ``m`` variables of total degree <= degree."""
    out = []
    for deg in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(m), deg):
            e = [0] * m
            for k in combo:
                e[k] += 1
            out.append(tuple(e))
    return out


class RegressionBackend:
    """Least-squares projection on polynomials of the current state.

    States are standardised per date; coordinates with zero spread (such as
    the deterministic initial state) are dropped from the basis.  The
    intercept is never penalised, so constants are reproduced exactly and
    fitted values keep the sample mean of the targets.  Each date is
    factorised once (pivoted QR) and shared by every target column.
    """

    kind = "least_squares"

    def __init__(self, ensemble: PathEnsemble, degree: int = DEFAULT_DEGREE,
                 ridge: float = DEFAULT_RIDGE, cache_size: int = 4):
        if degree < 0 or ridge < 0:
            raise InvalidArgumentError("degree and ridge must be non-negative")
        self.scenario = ensemble
        self.degree = int(degree)
        self.ridge = float(ridge)
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size

    def features(self, i: int) -> np.ndarray:
        x = self.scenario.states(i)
        mu = x.mean(axis=0)
        sd = x.std(axis=0)
        live = sd > 1e-13 * (1.0 + np.abs(mu))
        z = (x[:, live] - mu[live]) / sd[live]
        exps = monomial_exponents(z.shape[1], self.degree)
        cols = [np.prod(z ** np.array(e), axis=1) if any(e) else np.ones(z.shape[0])
                for e in exps]
        return np.stack(cols, axis=1)

    def _factor(self, i: int):
        if i in self._cache:
            self._cache.move_to_end(i)
            return self._cache[i]
        phi = self.features(i)
        n, k = phi.shape
        a = phi / np.sqrt(n)
        if self.ridge > 0 and k > 1:
            pen = np.sqrt(self.ridge) * np.eye(k)[1:]
            a = np.vstack([a, pen])
        q, r, perm = qr(a, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > max(a.shape) * np.finfo(float).eps * diag[0]))
        if rank < k:
            raise NumericalFailureError(
                f"regression at t_{i} is rank deficient ({rank} < {k} features); "
                "use a positive ridge or a lower basis degree")
        entry = (phi, q[:n] / np.sqrt(n), r, perm)
        self._cache[i] = entry
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return entry

    def coefficients(self, i: int, values) -> np.ndarray:
        """Coefficients in the standardised monomial basis, one column per target."""
        values = np.asarray(values, dtype=np.float64)
        _, qtop, r, perm = self._factor(i)
        rhs = qtop.T @ values.reshape(values.shape[0], -1)
        beta = np.empty_like(rhs)
        beta[perm] = solve_triangular(r, rhs)
        return beta

    def condexp(self, i: int, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.scenario.size(i):
            raise InvalidArgumentError("values do not match the number of paths")
        phi = self._factor(i)[0]
        fitted = phi @ self.coefficients(i, values)
        return fitted.reshape(values.shape)


def make_backend(scenario, degree: int = DEFAULT_DEGREE, ridge: float = DEFAULT_RIDGE):
    if isinstance(scenario, LatticeModel):
        return LatticeBackend(scenario)
    if isinstance(scenario, PathEnsemble):
        return RegressionBackend(scenario, degree, ridge)
    raise InvalidArgumentError(f"no conditional-expectation backend for {type(scenario)!r}")
