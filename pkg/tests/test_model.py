import numpy as np
import pytest

from orbsde.errors import InvalidArgumentError
from orbsde.model import (CostStructure, TimeGrid, build_grids, uniform_grid, validate_costs,
                          validate_problem)


def test_gamma_one_reflects_everywhere():
    g = build_grids(4, 1.0, 1.0)
    assert np.allclose(g.times[g.reflection], [0, .25, .5, .75, 1])
    assert g.kappa == 5


def test_gamma_half_subsamples_every_fourth_point():
    g = build_grids(16, 1.0, 0.5)
    assert g.mesh == 1 / 16
    assert np.allclose(g.times[g.reflection], [0, .25, .5, .75, 1])
    assert g.reflection_mesh == pytest.approx(0.25)


def test_gamma_third_spacing_within_factor_two():
    g = build_grids(64, 1.0, 1 / 3)
    gaps = np.diff(g.times[g.reflection])
    assert gaps.min() >= 0.125 - 1e-12 and gaps.max() <= 0.5 + 1e-12


@pytest.mark.parametrize("n,T", [(1, 1.0), (4, 0.0), (4, -1.0)])
def test_build_grids_rejects_bad_arguments(n, T):
    with pytest.raises(InvalidArgumentError):
        build_grids(n, T, 0.5)


def test_grid_contains_endpoints_and_alpha():
    g = uniform_grid(10, 2.0, reflection_every=3)
    assert g.reflection[0] and g.reflection[-1]
    assert list(g.reflection_indices) == [0, 3, 6, 9, 10]
    assert g.alpha() == pytest.approx(np.log(2 * 2.0 / 0.2))


def test_time_grid_validation():
    with pytest.raises(InvalidArgumentError):
        TimeGrid(np.array([0.0, 0.5, 0.4]), np.array([True, False, True]))


def test_costs_constant_pass_and_fail():
    ok = validate_costs(CostStructure.constant(1 - np.eye(3)), [[0.0]])
    assert ok.passed and ok.min_margin == pytest.approx(1.0)
    bad = np.array([[0, 1, 3], [1, 0, 1], [1, 1, 0]], float)
    rep = validate_costs(CostStructure.constant(bad), [[0.0]])
    assert not rep.passed
    (v,) = [v for v in rep.violations if v["kind"] == "structure"]
    assert (v["i"], v["j"], v["l"], v["value"]) == (1, 2, 3, -1.0)


def test_costs_d2_pass():
    rep = validate_costs(CostStructure.constant([[0, 1], [1, 0]]), np.zeros((3, 1)))
    assert rep.passed and rep.min_margin == pytest.approx(1.0)


def test_costs_diagonal_and_positivity():
    rep = validate_costs(CostStructure.constant([[0.5, 0], [1, 0]]), [[0.0]])
    kinds = {v["kind"] for v in rep.violations}
    assert {"diagonal", "positivity"} <= kinds


def test_state_dependent_costs_flagged_where_they_fail():
    c = CostStructure([[0, lambda x: x[:, 0]], [1, 0]])
    rep = validate_costs(c, np.array([[1.0], [-1.0]]))
    assert any(v["kind"] == "positivity" and v["x"] == [-1.0] for v in rep.violations)
    assert not any(v.get("x") == [1.0] for v in rep.violations)


def test_terminal_membership(make_problem):
    ok = make_problem(f=[0, 0], g=["x1", "x1"], c=[[0, 1], [1, 0]])
    assert validate_problem(ok, np.linspace(-2, 2, 9)).passed
    bad = make_problem(f=[0, 0], g=["x1", "x1 + 2"], c=[[0, 1], [1, 0]])
    rep = validate_problem(bad, np.linspace(-2, 2, 9))
    term = [v for v in rep.violations if v["kind"] == "terminal"]
    assert len(term) == 9 and all(v["component"] == 1 for v in term)
    assert term[0]["gap"] == pytest.approx(1.0)


def test_zero_driver_passes_small_lipschitz(make_problem):
    p = make_problem(f=[0, 0], g=["x1", "x1"], c=[[0, 1], [1, 0]], ly=0.01, lz=0.01)
    assert validate_problem(p, np.zeros(4)).passed


def test_lipschitz_underestimate_flagged(make_problem):
    p = make_problem(f=["3*y1 + z1", "y2"], g=["x1", "x1"], c=[[0, 1], [1, 0]], ly=1.0, lz=0.5)
    rep = validate_problem(p, np.zeros(4))
    kinds = {v["kind"] for v in rep.violations}
    assert kinds == {"lipschitz_y", "lipschitz_z"}
    assert rep.details["lipschitz_y"]["estimated"] == pytest.approx(3.0, rel=1e-6)


def test_problem_dimension_checks(make_problem):
    with pytest.raises(InvalidArgumentError):
        make_problem(f=[0, 0], g=["x1"], c=[[0, 1], [1, 0]])
    with pytest.raises(InvalidArgumentError):
        make_problem(f=[0], g=[0], c=[[0]], ly=0.0)


def test_driver_sees_only_its_z_row(make_problem):
    p = make_problem(f=["z1", "2*z1"], g=[0, 0], c=[[0, 1], [1, 0]])
    z = np.array([[[1.0], [10.0]]])
    assert p.f(np.zeros((1, 1)), np.zeros((1, 2)), z).tolist() == [[1.0, 20.0]]


def test_shifted_costs():
    c = CostStructure([[0, 1.0], [lambda x: x[:, 0], 0]]).shifted(0.1)
    m = c.evaluate(np.array([[2.0]]))[0]
    assert np.allclose(m, [[0, 1.1], [2.1, 0]])
