"""Pure numpy implementations of the per-node kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature; ``orbsde.kernels`` picks one at import time.  Inputs are already
normalised by the dispatcher: ``costs`` is float64 of shape (N, d, d),
``y`` float64 of shape (N, d), mode arrays intp.
"""

import numpy as np


def project(costs, y):
    return np.max(y[:, None, :] - costs, axis=2)


def project_argmax(costs, y):
    cand = y[:, None, :] - costs
    # np.argmax returns the first maximiser: ties go to the smallest index
    idx = np.argmax(cand, axis=2)
    return np.take_along_axis(cand, idx[:, :, None], axis=2)[:, :, 0], idx


def best_switch(costs, y):
    n, d = y.shape
    cand = y[:, None, :] - costs
    cand[:, np.arange(d), np.arange(d)] = -np.inf
    idx = np.argmax(cand, axis=2)
    val = np.take_along_axis(cand, idx[:, :, None], axis=2)[:, :, 0]
    return val, idx


def in_domain(costs, y, tol):
    return np.all(y >= project(costs, y) - tol, axis=1)


def apply_switch_chain(decisions, mode_in, costs, max_switches):
    n = mode_in.shape[0]
    rows = np.arange(n)
    mode = mode_in.copy()
    paid = np.zeros(n)
    count = np.zeros(n, dtype=np.intp)
    for _ in range(max_switches):
        target = decisions[rows, mode]
        moving = target != mode
        if not moving.any():
            break
        paid[moving] += costs[rows[moving], mode[moving], target[moving]]
        count[moving] += 1
        mode = np.where(moving, target, mode)
    return mode, paid, count
