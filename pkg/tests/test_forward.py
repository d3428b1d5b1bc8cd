import numpy as np
import pytest

from orbsde.errors import CapacityError, InvalidArgumentError
from orbsde.forward import (brownian_increments, build_lattice, dump_ensemble, load_ensemble,
                            simulate_euler)
from orbsde.model import uniform_grid


def test_degenerate_diffusion_stays_at_x0(make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]], sigma=[[0]], x0=[1.5])
    ens = simulate_euler(p, uniform_grid(5, 1.0), 100, seed=1)
    assert np.all(ens.paths == 1.5)


def test_constant_drift_is_exact(make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]], b=[1], sigma=[[0]], x0=[0.25])
    ens = simulate_euler(p, uniform_grid(4, 1.0), 10, seed=0)
    assert np.all(ens.states(4) == 1.25)


def test_terminal_mean_of_brownian(make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]])
    ens = simulate_euler(p, uniform_grid(8, 1.0), 100_000, seed=2)
    assert abs(ens.states(8).mean()) <= 4 / np.sqrt(100_000)
    assert ens.states(8).var() == pytest.approx(1.0, rel=0.02)


def test_same_seed_same_paths(make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]])
    a = simulate_euler(p, uniform_grid(8, 1.0), 50, seed=9)
    b = simulate_euler(p, uniform_grid(8, 1.0), 50, seed=9)
    c = simulate_euler(p, uniform_grid(8, 1.0), 50, seed=10)
    assert np.array_equal(a.paths, b.paths)
    assert not np.array_equal(a.paths, c.paths)


@pytest.mark.parametrize("coarse,fine", [(4, 16), (8, 64), (1, 32)])
def test_common_random_numbers_on_dyadic_grids(coarse, fine):
    wc = np.cumsum(brownian_increments(uniform_grid(coarse, 1.0), 500, 2, 3), axis=0)
    wf = np.cumsum(brownian_increments(uniform_grid(fine, 1.0), 500, 2, 3), axis=0)
    stride = fine // coarse
    assert np.allclose(wc, wf[stride - 1::stride], atol=1e-12)


def test_path_count_is_a_prefix():
    a = brownian_increments(uniform_grid(8, 1.0), 100, 1, 4)
    b = brownian_increments(uniform_grid(8, 1.0), 300, 1, 4)
    assert np.array_equal(a, b[:, :100])


def test_non_dyadic_grid_increments_have_right_variance():
    dw = brownian_increments(uniform_grid(6, 3.0), 200_000, 1, 0)
    assert dw.var(axis=1).ravel() == pytest.approx(np.full(6, 0.5), rel=0.02)


def test_memory_budget(make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]])
    with pytest.raises(CapacityError):
        simulate_euler(p, uniform_grid(100, 1.0), 10**6, memory_budget=10**6)
    with pytest.raises(InvalidArgumentError):
        simulate_euler(p, uniform_grid(4, 1.0), 0)


def test_lattice_counts_and_probabilities(make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]])
    lat = build_lattice(p, uniform_grid(2, 1.0))
    assert lat.node_count == 7
    assert np.allclose(lat.probabilities(2), 0.25)
    assert list(lat.parents(2)) == [0, 0, 1, 1]
    assert list(lat.ancestors(2, 0)) == [0, 0, 0, 0]


def test_lattice_single_step(make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]], x0=[2.0])
    lat = build_lattice(p, uniform_grid(1, 1.0))
    assert lat.states(1).ravel().tolist() == [1.0, 3.0]
    assert lat.increments(0).ravel().tolist() == [-1.0, 1.0]


def test_lattice_two_brownian_dimensions(make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]], m=2, q=2, sigma=[[1, 0], [0, 1]], x0=[0, 0])
    lat = build_lattice(p, uniform_grid(1, 1.0))
    # child b: bit l is the sign of coordinate l
    assert lat.increments(0).tolist() == [[-1, -1], [1, -1], [-1, 1], [1, 1]]


def test_lattice_budget(make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]])
    with pytest.raises(CapacityError):
        build_lattice(p, uniform_grid(23, 1.0))


def test_ensemble_dump_round_trip(tmp_path, make_problem):
    p = make_problem(f=[0], g=["x1"], c=[[0]], m=2, q=2, sigma=[[1, 0.5], [0, 1]], x0=[0, 1])
    ens = simulate_euler(p, uniform_grid(5, 2.0, 2), 37, seed=5)
    path = tmp_path / "ens.bin"
    dump_ensemble(ens, path)
    back = load_ensemble(path)
    assert np.array_equal(back.paths, ens.paths) and np.array_equal(back.dw, ens.dw)
    assert np.array_equal(back.grid.reflection, ens.grid.reflection)
    assert back.seed == 5
    assert path.read_bytes()[:8] == b"ORBSDEPE"


def test_load_rejects_foreign_file(tmp_path):
    bad = tmp_path / "x.bin"
    bad.write_bytes(b"NOTADUMP" + bytes(16))
    with pytest.raises(InvalidArgumentError):
        load_ensemble(bad)
