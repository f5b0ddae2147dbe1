import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisoheat.diffusivity import ConstantModel, SpdMatrix, accumulate_array, random_spd
from anisoheat.errors import QuadratureUnresolved
from anisoheat.fitting import loglog_slope
from anisoheat.kernel import KernelParams, kernel_eval
from anisoheat.oracle import GaussianState, gaussian_evolve
from anisoheat.propagator import (
    GRID_TOO_COARSE, Field, SpatialGrid, Trajectory, apply_propagator, apply_symbol,
    gradient_norm, identity_limit_check, solve_duhamel, solve_homogeneous, spectral_gradient,
)


def rel_l2(a, b):
    return float(np.linalg.norm(a.values - b.values) / np.linalg.norm(b.values))


class TestGrid:
    def test_power_of_two_required(self):
        with pytest.raises(ValueError):
            SpatialGrid(1, 100, 5.0)

    def test_frequency_convention(self):
        g = SpatialGrid(1, 8, 2.0)
        assert g.wavenumbers[1] == pytest.approx(math.pi / 2.0)
        assert g.spacing == pytest.approx(0.5)
        assert g.axis[0] == -2.0

    def test_coordinates_shape(self, grid2d):
        assert grid2d.coordinates.shape == (64, 64, 2)


def test_constant_field_is_fixed(grid2d, rng):
    u = Field(grid2d, np.full(grid2d.shape, 3.5))
    out = apply_propagator(u, ConstantModel(random_spd(rng, 2)), 0.0, 1.7)
    assert np.max(np.abs(out.values - 3.5)) <= 1e-14


def test_gaussian_in_gaussian_out(grid1d, unit_model):
    g0 = GaussianState([[0.5]])
    out = apply_propagator(g0.sample(grid1d), unit_model, 0.0, 1.0)
    ref = gaussian_evolve(g0, unit_model, 0.0, 1.0).sample(grid1d)
    assert rel_l2(out, ref) <= 1e-8


def test_gaussian_in_gaussian_out_2d(smooth_model):
    grid2d = SpatialGrid(2, 128, 14.0)  # keeps sqrt(lambda_max) < L/8
    g0 = GaussianState([[0.6, 0.1], [0.1, 0.4]])
    out = apply_propagator(g0.sample(grid2d), smooth_model, 0.3, 1.1)
    ref = gaussian_evolve(g0, smooth_model, 0.3, 1.1).sample(grid2d)
    assert rel_l2(out, ref) <= 1e-8


def test_trajectory_times_zero(grid1d, unit_model):
    u0 = GaussianState([[0.5]]).sample(grid1d)
    traj = solve_homogeneous(u0, unit_model, [0.0])
    assert len(traj) == 1 and traj.states[0] is u0


def test_trajectory_validation(grid1d):
    u = Field(grid1d, np.zeros(grid1d.shape))
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [u, u])
    with pytest.raises(ValueError):
        Trajectory([0.0], [u, u])


def test_mass_and_positivity_along_trajectory(grid2d, smooth_model):
    u0 = GaussianState([[0.5, 0.0], [0.0, 0.8]]).sample(grid2d)
    traj = solve_homogeneous(u0, smooth_model, [0.0, 0.25, 0.5, 1.0], workers=2)
    m0 = u0.mass()
    for u in traj.states:
        assert u.mass() == pytest.approx(m0, rel=1e-12)
        assert u.values.min() >= -1e-12 * u0.values.max()


def test_threads_do_not_change_results(grid2d, smooth_model):
    u0 = GaussianState(np.eye(2)).sample(grid2d)
    a = solve_homogeneous(u0, smooth_model, [0.0, 0.3, 0.9], workers=1)
    b = solve_homogeneous(u0, smooth_model, [0.0, 0.3, 0.9], workers=3)
    for x, y in zip(a.states, b.states):
        assert np.array_equal(x.values, y.values)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_semigroup(seed):
    rng = np.random.default_rng(seed)
    grid = SpatialGrid(2, 32, 6.0)
    model = ConstantModel(random_spd(rng, 2, 0.05, 0.5))
    r, s, t = np.sort(rng.uniform(0.0, 1.0, 3))
    u = Field(grid, rng.standard_normal(grid.shape))
    two = apply_propagator(apply_propagator(u, model, r, s), model, s, t)
    one = apply_propagator(u, model, r, t)
    assert rel_l2(two, one) <= 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_l2_nonexpansive_and_translation(seed):
    rng = np.random.default_rng(seed)
    grid = SpatialGrid(1, 64, 5.0)
    model = ConstantModel(random_spd(rng, 1, 0.01, 0.2))
    u = Field(grid, rng.standard_normal(grid.shape))
    out = apply_propagator(u, model, 0.0, 1.0)
    assert out.norm(2) < u.norm(2)
    shift = int(rng.integers(1, 64))
    moved = apply_propagator(Field(grid, np.roll(u.values, shift)), model, 0.0, 1.0)
    assert np.allclose(moved.values, np.roll(out.values, shift), rtol=0, atol=1e-13 * np.abs(out.values).max())


def test_identity_at_equal_times(grid1d, unit_model):
    u = GaussianState([[0.5]]).sample(grid1d)
    assert apply_propagator(u, unit_model, 0.7, 0.7) is u
    assert identity_limit_check(u, unit_model, 0.5, [0.0]) == [0.0]


def test_identity_limit_rate(grid1d, unit_model):
    u = GaussianState([[0.5]]).sample(grid1d)
    eps = list(np.geomspace(1e-2, 1e-5, 7))
    errs = identity_limit_check(u, unit_model, 0.5, eps)
    assert all(b < a for a, b in zip(errs, errs[1:]))
    fit = loglog_slope(eps, errs)
    assert fit.slope == pytest.approx(1.0, abs=0.1)
    fine = SpatialGrid(1, 512, 12.0)
    fit2 = loglog_slope(eps, identity_limit_check(GaussianState([[0.5]]).sample(fine), unit_model, 0.5, eps))
    assert fit2.slope == pytest.approx(fit.slope, abs=0.05)


def test_grid_too_coarse_flag():
    grid = SpatialGrid(1, 16, 8.0)
    u = Field(grid, np.where(np.arange(16) % 2 == 0, 1.0, -1.0))
    out = apply_symbol(u, np.array([[1e-4]]))
    assert GRID_TOO_COARSE in out.flags
    smooth = GaussianState([[2.0]]).sample(grid)
    assert GRID_TOO_COARSE not in apply_symbol(smooth, np.array([[1.0]])).flags


def test_spectral_gradient_of_gaussian(grid1d):
    g = GaussianState([[0.5]])
    u = g.sample(grid1d)
    x = grid1d.coordinates[..., 0]
    exact = -x / (2 * 0.5) * u.values
    assert np.max(np.abs(spectral_gradient(u)[0].values - exact)) <= 1e-10
    assert gradient_norm(u) > 0


class TestDuhamel:
    def test_zero_source_equals_homogeneous(self, grid1d, unit_model):
        u0 = GaussianState([[0.5]]).sample(grid1d)
        zero = lambda s: Field(grid1d, np.zeros(grid1d.shape))
        got = solve_duhamel(u0, zero, unit_model, 1.0)
        assert np.allclose(got.values, apply_propagator(u0, unit_model, 0.0, 1.0).values, atol=1e-15)
        assert solve_duhamel(u0, None, unit_model, 1.0).values.tolist() == \
            apply_propagator(u0, unit_model, 0.0, 1.0).values.tolist()

    def test_manufactured_solution(self, grid1d, unit_model):
        # u = e^{-t} W(x; 0.5 + t) solves u_t = u_xx - u, so f = -u
        def exact(t):
            return math.exp(-t) * GaussianState([[0.5 + t]]).sample(grid1d)

        f = lambda s: exact(s) * -1.0
        got = solve_duhamel(exact(0.0), f, unit_model, 1.0, panels=16, tol=None)
        assert rel_l2(got, exact(1.0)) <= 1e-6

    def test_source_matches_finite_differences(self, grid1d):
        # cross-check of the analytic source used above
        x = grid1d.coordinates[..., 0]
        t, h = 0.6, 1e-5
        u = lambda t: math.exp(-t) * np.exp(-x ** 2 / (4 * (0.5 + t))) / np.sqrt(4 * math.pi * (0.5 + t))
        du = (u(t + h) - u(t - h)) / (2 * h)
        s = 0.5 + t
        uxx = u(t) * (x ** 2 / (4 * s ** 2) - 1 / (2 * s))
        assert np.max(np.abs((du - uxx) - (-u(t)))) <= 1e-8

    def test_panel_doubling_converges(self, grid1d, unit_model):
        u0 = GaussianState([[0.5]]).sample(grid1d)
        f = lambda s: math.cos(3 * s) * GaussianState([[0.3]]).sample(grid1d)
        got = solve_duhamel(u0, f, unit_model, 1.0, panels=2, tol=1e-10)
        assert got.meta["last_change"] <= 1e-10
        with pytest.raises(QuadratureUnresolved):
            solve_duhamel(u0, lambda s: math.cos(400 * s) * u0, unit_model, 1.0, panels=1,
                          tol=1e-14, max_panels=4)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_requires_positive_time(self, grid1d, unit_model, bad):
        u0 = GaussianState([[0.5]]).sample(grid1d)
        with pytest.raises(ValueError):
            solve_duhamel(u0, None, unit_model, bad)
