"""Oblique projection onto ``Q = {y : y^i >= max_j (y^j - C^{ij})}``.

All functions accept a single cost matrix with a single vector, or stacks
of shape (N, d, d) and (N, d) processed node by node.
"""

import numpy as np

from . import kernels
from .errors import InvalidArgumentError


def _check_diagonal(costs):
    c = np.asarray(costs, dtype=np.float64)
    if c.shape[-1] != c.shape[-2]:
        raise InvalidArgumentError(f"cost matrix must be square, got shape {c.shape}")
    if np.any(np.diagonal(c, axis1=-2, axis2=-1) != 0.0):
        raise InvalidArgumentError("cost matrix must have a zero diagonal")
    return c


def in_domain(costs, y, tol=0.0):
    """True where ``y^i >= max_j (y^j - C^{ij}) - tol`` for every component."""
    if tol < 0:
        raise InvalidArgumentError("tol must be non-negative")
    return kernels.in_domain(costs, y, tol)


def project(costs, y):
    """``p^i = max_j (y^j - C^{ij})``; dominates ``y`` componentwise."""
    return kernels.project(_check_diagonal(costs), y)


def project_with_argmax(costs, y):
    """Projection together with the smallest maximising index per component."""
    return kernels.project_argmax(_check_diagonal(costs), y)


def structure_margin(costs):
    """Smallest of the off-diagonal costs and the triangle margins of one matrix."""
    c = _check_diagonal(costs)
    d = c.shape[0]
    off = ~np.eye(d, dtype=bool)
    margin = c[off].min() if d > 1 else np.inf
    tri = c[:, :, None] + c[None, :, :] - c[:, None, :]   # [i, j, l]
    mask = off[:, :, None] & off[None, :, :]
    if mask.any():
        margin = min(margin, tri[mask].min())
    return float(margin)
