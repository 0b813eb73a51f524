import numpy as np
import pytest

from elliptic.kernel import green_kernel, kernel_check
from elliptic.signal import TOL_POS, helmholtz_residual, solve_signal
from model.grid import PhaseGrid
from utils.errors import NonFiniteInput


def make_grid(dim=1, x_nodes=32, x_extent=8.0, x_topology="periodic"):
    return PhaseGrid.build(
        dim=dim, x_nodes=x_nodes, x_extent=x_extent, x_topology=x_topology, v_count=2 if dim == 1 else 4,
        m_nodes=4, m_max=3.0,
    )


@pytest.mark.parametrize("dim", [1, 2])
def test_constant_density_gives_constant_signal(dim):
    grid = make_grid(dim=dim, x_nodes=16)
    S = solve_signal(np.full(grid.x_shape, 2.5), grid)
    np.testing.assert_allclose(S.values, 2.5, rtol=1e-12)
    assert S.solver == "spectral"


@pytest.mark.parametrize("dim", [1, 2])
def test_spectral_residual(dim, rng):
    grid = make_grid(dim=dim, x_nodes=32)
    n = rng.uniform(0.0, 1.0, size=grid.x_shape)
    S = solve_signal(n, grid)
    residual = helmholtz_residual(S, n, grid)
    assert np.max(np.abs(residual)) <= 1e-10 * np.max(n)


def test_periodic_signal_conserves_mass(rng):
    grid = make_grid()
    n = rng.uniform(0.0, 1.0, size=grid.x_shape)
    S = solve_signal(n, grid)
    assert np.sum(S.values) == pytest.approx(np.sum(n), rel=1e-12)
    assert np.min(S.values) >= -S.tol_pos


def test_free_space_delta_peak():
    grid = make_grid(x_topology="free", x_nodes=41, x_extent=4.1)
    dx = grid.dx
    n = np.zeros(grid.x_shape)
    n[20] = 1.0 / dx
    S = solve_signal(n, grid)
    assert S.solver == "convolution"
    assert S.values[20] == pytest.approx((1.0 - np.exp(-dx / 2)) / dx, rel=1e-12)
    # away from the source the cell averages follow exp(-|x|) / 2
    j = 30
    expected = 0.5 * (np.exp(-(j - 20 - 0.5) * dx) - np.exp(-(j - 20 + 0.5) * dx)) / dx
    assert S.values[j] == pytest.approx(expected, rel=1e-12)
    np.testing.assert_allclose(S.values, S.values[::-1], rtol=1e-12)


@pytest.mark.parametrize("dim", [1, 2])
def test_free_space_young_bounds(dim, rng):
    grid = make_grid(dim=dim, x_nodes=24 if dim == 1 else 16, x_topology="free")
    n = rng.uniform(0.0, 1.0, size=grid.x_shape)
    S = solve_signal(n, grid)
    assert np.min(S.values) >= -TOL_POS["convolution"]
    assert np.max(S.values) <= np.max(n) * (1 + 1e-12)
    assert np.sum(S.values) <= np.sum(n) * (1 + 1e-12)


def test_free_space_is_linear(rng):
    grid = make_grid(x_topology="free")
    a = rng.uniform(0.0, 1.0, size=grid.x_shape)
    b = rng.uniform(0.0, 1.0, size=grid.x_shape)
    combined = solve_signal(2.0 * a + 3.0 * b, grid).values
    separate = 2.0 * solve_signal(a, grid).values + 3.0 * solve_signal(b, grid).values
    np.testing.assert_allclose(combined, separate, rtol=1e-12, atol=1e-14)


def test_free_space_matches_periodic_away_from_boundary():
    free = make_grid(x_topology="free", x_nodes=400, x_extent=40.0)
    periodic = make_grid(x_topology="periodic", x_nodes=400, x_extent=40.0)
    n = np.exp(-free.x_centers**2 / 2)
    S_free = solve_signal(n, free).values
    S_periodic = solve_signal(n, periodic).values
    core = np.abs(free.x_centers) < 5.0
    np.testing.assert_allclose(S_free[core], S_periodic[core], atol=5e-3)


def test_source_hash_tracks_density(rng):
    grid = make_grid()
    n = rng.uniform(0.0, 1.0, size=grid.x_shape)
    first = solve_signal(n, grid)
    assert solve_signal(n.copy(), grid).source_hash == first.source_hash
    n[0] += 1.0
    assert solve_signal(n, grid).source_hash != first.source_hash


def test_rejects_bad_density():
    grid = make_grid()
    n = np.ones(grid.x_shape)
    n[5] = np.inf
    with pytest.raises(NonFiniteInput):
        solve_signal(n, grid)
    with pytest.raises(ValueError):
        solve_signal(np.ones(grid.x_nodes + 1), grid)


def test_kernel_shape_and_symmetry():
    grid = make_grid(dim=2, x_nodes=12, x_extent=6.0, x_topology="free")
    kernel = green_kernel(grid)
    assert kernel.values.shape == (23, 23)
    assert kernel.radius == 11
    np.testing.assert_allclose(kernel.values, kernel.values.T, rtol=1e-12)
    np.testing.assert_allclose(kernel.values, kernel.values[::-1, :], rtol=1e-12)
    assert np.argmax(kernel.values) == kernel.values.size // 2
    assert kernel.mass < 1.0


def test_kernel_check_one_dimensional(tmp_path):
    grid = make_grid(x_topology="free", x_nodes=80, x_extent=4.0)
    report = kernel_check(grid)
    assert report.passed, report.rows
    assert report["mass"]["value"] == pytest.approx(1.0, abs=1e-6)
    report.to_csv(tmp_path / "kernel_check.csv")
    lines = (tmp_path / "kernel_check.csv").read_text().splitlines()
    assert lines[0] == "check,value,expected,lower,upper,passed"
    assert len(lines) == 1 + 3 + 5


def test_kernel_check_two_dimensional_mass():
    grid = make_grid(dim=2, x_nodes=16, x_extent=8.0, x_topology="free")
    report = kernel_check(grid)
    assert report["mass"]["passed"], report["mass"]
    assert report["min"]["passed"]
    assert 1.0 - 1e-6 <= report["mass"]["value"] <= 1.0 + 1e-8
    grad = report["grad_l1"]
    assert grad["passed"], grad
    assert grad["upper"] < np.pi / 2 < 1.3 * grad["upper"]
    assert grad["value"] == pytest.approx(np.pi / 2, rel=grid.dx / 2)
