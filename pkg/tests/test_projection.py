import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orbsde import kernels
from orbsde.errors import InvalidArgumentError
from orbsde.projection import in_domain, project, project_with_argmax, structure_margin

C1 = 1 - np.eye(2)


def test_membership_examples():
    assert in_domain(C1, [0.0, 0.5])
    assert not in_domain(C1, [0.0, 2.0])
    assert in_domain(1 - np.eye(4), np.full(4, 3.7))


def test_projection_example():
    assert project(C1, [3.0, 0.0]).tolist() == [3.0, 2.0]
    val, arg = project_with_argmax(C1, [3.0, 0.0])
    assert val.tolist() == [3.0, 2.0] and arg.tolist() == [0, 0]


def test_domain_points_fixed():
    y = np.array([0.0, 0.5])
    assert np.array_equal(project(C1, y), y)


def test_argmax_prefers_smallest_index():
    _, arg = project_with_argmax(np.zeros((3, 3)), np.ones(3))
    assert arg.tolist() == [0, 0, 0]


def test_nonzero_diagonal_rejected():
    with pytest.raises(InvalidArgumentError):
        project(np.ones((2, 2)), [0.0, 0.0])


def test_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        project(np.zeros((3, 3)), [0.0, 1.0])


def test_negative_tolerance():
    with pytest.raises(InvalidArgumentError):
        in_domain(C1, [0.0, 0.0], tol=-1)


def test_structure_margin():
    assert structure_margin(1 - np.eye(3)) == 1.0
    assert structure_margin(np.array([[0, 1, 3], [1, 0, 1], [1, 1, 0]], float)) == -1.0


def _costs(d, seed):
    rng = np.random.default_rng(seed)
    p = rng.random(d)
    c = np.abs(p[:, None] - p[None, :]) + rng.uniform(0.1, 0.2, (d, d))
    np.fill_diagonal(c, 0)
    return c


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 5).flatmap(lambda d: st.tuples(
    st.just(d), st.integers(0, 2**32 - 1),
    arrays(np.float64, d, elements=st.floats(-1e3, 1e3)))))
def test_projection_lands_in_domain(args):
    d, seed, y = args
    c = _costs(d, seed)
    p = project(c, y)
    assert np.all(p >= y)
    assert in_domain(c, p, 1e-9)
    assert np.allclose(project(c, p), p, atol=1e-12, rtol=0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 50), st.integers(2, 6))
def test_compiled_and_python_agree(seed, n, d):
    impls = kernels.implementations()
    rng = np.random.default_rng(seed)
    c = np.stack([_costs(d, seed + k) for k in range(n)])
    y = rng.standard_normal((n, d))
    dec = rng.integers(0, d, (n, d))
    mode = rng.integers(0, d, n)
    results = {}
    for name, mod in impls.items():
        results[name] = (kernels.project(c, y, impl=mod),
                         *kernels.project_argmax(c, y, impl=mod),
                         *kernels.best_switch(c, y, impl=mod),
                         kernels.in_domain(c, y, 1e-3, impl=mod),
                         *kernels.apply_switch_chain(dec, mode, c, d - 1, impl=mod))
    ref = results["python"]
    for res in results.values():
        for a, b in zip(ref, res):
            assert np.array_equal(a, b)


def test_switch_chain_caps_instantaneous_switches():
    c = np.full((3, 3), 0.1)
    np.fill_diagonal(c, 0)
    dec = np.array([[1, 2, 0]])          # 0 -> 1 -> 2 -> 0 -> ...
    mode, paid, count = kernels.apply_switch_chain(dec, np.array([0]), c, 2)
    assert (mode[0], count[0]) == (2, 2) and paid[0] == pytest.approx(0.2)
    mode, paid, count = kernels.apply_switch_chain(dec, np.array([0]), c, 0)
    assert (mode[0], count[0], paid[0]) == (0, 0, 0.0)


def test_best_switch_excludes_self():
    val, arg = kernels.best_switch(1 - np.eye(2), np.array([5.0, 0.0]))
    assert val.tolist() == [-1.0, 4.0] and arg.tolist() == [1, 0]
