"""Dispatch between the compiled and the numpy kernel implementations.

The compiled extension ``orbsde._ckernels`` is used when it was built and
``ORBSDE_PURE_PYTHON`` is not set to a true value.  ``BACKEND`` records the
choice.  All wrappers accept a single (d, d) cost matrix or a per-node stack
of shape (N, d, d) and a single vector or a (N, d) stack.
"""

import os

import numpy as np

from . import _pykernels
from .errors import InvalidArgumentError


def _load_compiled():
    if os.environ.get("ORBSDE_PURE_PYTHON", "").lower() in ("1", "true", "yes"):
        return None
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()
_impl = _compiled if _compiled is not None else _pykernels
BACKEND = "compiled" if _compiled is not None else "python"


def implementations():
    """Return the available ``{name: module}`` kernel implementations."""
    out = {"python": _pykernels}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def _normalise(costs, y):
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    y2 = np.ascontiguousarray(y[None, :] if single else y)
    if y2.ndim != 2:
        raise InvalidArgumentError(f"expected vector or (N, d) stack, got shape {y.shape}")
    n, d = y2.shape
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim == 2 and c.shape == (d, d):
        c = np.broadcast_to(c, (n, d, d))
    if c.shape != (n, d, d):
        raise InvalidArgumentError(
            f"cost matrices of shape {np.shape(costs)} do not match values of shape {y.shape}"
        )
    return c, y2, single


def project(costs, y, impl=None):
    c, y2, single = _normalise(costs, y)
    out = (impl or _impl).project(c, y2)
    return out[0] if single else out


def project_argmax(costs, y, impl=None):
    c, y2, single = _normalise(costs, y)
    val, idx = (impl or _impl).project_argmax(c, y2)
    return (val[0], idx[0]) if single else (val, idx)


def best_switch(costs, y, impl=None):
    """Best value and smallest maximiser of ``y[m] - C[i, m]`` over ``m != i``."""
    c, y2, single = _normalise(costs, y)
    val, idx = (impl or _impl).best_switch(c, y2)
    return (val[0], idx[0]) if single else (val, idx)


def in_domain(costs, y, tol=0.0, impl=None):
    c, y2, single = _normalise(costs, y)
    out = (impl or _impl).in_domain(c, y2, float(tol))
    return bool(out[0]) if single else out


def apply_switch_chain(decisions, mode_in, costs, max_switches, impl=None):
    """Follow per-node switching decisions starting from ``mode_in``.

    Returns the final mode and total cost paid, plus the number of switches
    per node.  At most ``max_switches`` instantaneous switches are made.
    """
    decisions = np.ascontiguousarray(decisions, dtype=np.intp)
    mode_in = np.ascontiguousarray(mode_in, dtype=np.intp)
    n, d = decisions.shape
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim == 2:
        c = np.broadcast_to(c, (n, d, d))
    return (impl or _impl).apply_switch_chain(decisions, mode_in, c, int(max_switches))
