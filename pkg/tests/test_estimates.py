import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisoheat.diffusivity import ConstantModel, PiecewiseConstantModel, SmoothModel, random_spd
from anisoheat.errors import AssumptionViolated, BadExponent, ExponentMismatch
from anisoheat.estimates import (
    BoundReport, check_energy_monotone, check_lplq, check_young, decay_bound, decay_bound_uniform,
    decay_constant, energy, lplq_operator_bound, measured_operator_ratio, singular_budget_integral,
    source_beta_norm, verify_decay, young_r,
)
from anisoheat.kernel import KernelParams, kernel_p_norm
from anisoheat.oracle import GaussianState
from anisoheat.propagator import Field, SpatialGrid, solve_homogeneous


class TestEnergy:
    def test_zero(self, grid1d):
        assert energy(Field(grid1d, np.zeros(grid1d.shape)), 2.0) == 0.0

    def test_half_plateau(self):
        grid = SpatialGrid(1, 64, 4.0)
        vals = np.zeros(64)
        vals[:32] = 1.0
        assert energy(Field(grid, vals), 2.0) == pytest.approx(32 * grid.spacing, rel=1e-15)

    def test_kernel_energy_is_squared_norm(self, grid2d):
        sigma = np.array([[0.9, 0.2], [0.2, 0.7]])
        u = GaussianState(sigma).sample(grid2d)
        assert energy(u, 2.0) == pytest.approx(kernel_p_norm(KernelParams(sigma), 2.0) ** 2, rel=1e-8)

    def test_bad_exponent(self, grid1d):
        with pytest.raises(BadExponent):
            energy(Field(grid1d, np.zeros(grid1d.shape)), 0.5)


class TestEnergyMonotone:
    def test_single_time(self, grid1d, unit_model):
        traj = solve_homogeneous(GaussianState([[0.5]]).sample(grid1d), unit_model, [0.0])
        assert check_energy_monotone(traj, 2.0) == []

    @pytest.mark.parametrize("q,strict", [(2.0, True), (4.0, False), (1.5, False)])
    def test_gaussian(self, grid1d, unit_model, q, strict):
        traj = solve_homogeneous(GaussianState([[0.5]]).sample(grid1d), unit_model, [0.0, 0.5, 1.0])
        reps = check_energy_monotone(traj, q)
        assert len(reps) == 2 and all(r.satisfied for r in reps)
        if strict:
            assert all(r.measured < r.bound for r in reps)


class TestYoung:
    def test_r_infinite_rejected(self):
        with pytest.raises(ExponentMismatch):
            check_young(2.0, 2.0, 2.0)
        with pytest.raises(ExponentMismatch):
            young_r(2.0, 2.0)

    def test_valid(self):
        check_young(2.0, 1.0, 2.0)
        assert young_r(4.0 / 3.0, 2.0) == pytest.approx(4.0)

    def test_operator_bound_value(self, unit_model):
        # equals ||W(.; 1)||_2 = 2^(-1/4) (4 pi)^(-1/4)
        got = lplq_operator_bound(unit_model, 0.0, 1.0, 2.0, 1.0, 2.0)
        assert got == pytest.approx(2 ** -0.25 * (4 * math.pi) ** -0.25, rel=1e-14)
        assert got == kernel_p_norm(KernelParams([[1.0]]), 2.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([(1.0, 2.0, 2.0), (4.0 / 3.0, 2.0, 4.0), (2.0, 1.0, 2.0)]))
def test_operator_ratio_below_bound(seed, triple):
    rng = np.random.default_rng(seed)
    grid = SpatialGrid(2, 32, 6.0)
    model = ConstantModel(random_spd(rng, 2, 0.1, 0.5))
    u = Field(grid, rng.standard_normal(grid.shape))
    p, q, r = triple
    assert measured_operator_ratio(u, model, 0.0, 1.0, q, r) <= \
        lplq_operator_bound(model, 0.0, 1.0, p, q, r) * (1 + 1e-9)


def test_check_lplq_reports(grid1d, step_model):
    traj = solve_homogeneous(GaussianState([[0.2]]).sample(grid1d), step_model, [0.0, 0.5, 1.5])
    reps = check_lplq(traj, step_model, 2.0, 1.0, 2.0)
    assert [r.t for r in reps] == [0.5, 1.5]
    assert all(r.satisfied and r.ratio < 1 for r in reps)


class TestDecay:
    def test_constant(self):
        assert decay_constant(1, 2.0) == pytest.approx(2 ** -0.25 * (4 * math.pi) ** -0.25, rel=1e-15)
        assert decay_constant(3, 1.0) == 1.0

    def test_infinite_at_zero(self, unit_model):
        assert decay_bound(unit_model, 0.0, 2.0, 1.0, 2.0, 2.0, 1.0) == math.inf
        assert BoundReport.make("decay", 0.0, 5.0, math.inf).satisfied

    def test_assumption(self, unit_model):
        with pytest.raises(AssumptionViolated):
            decay_bound(unit_model, 1.0, 2.0, 1.0, 2.0, 4.0, 1.0)
        with pytest.raises(BadExponent):
            decay_bound(unit_model, 1.0, 2.0, 1.0, 2.0, 1.0, 1.0)

    @pytest.mark.parametrize("n,gamma", [(1, 1.0), (2, 0.7)])
    def test_general_matches_uniform(self, n, gamma):
        model = ConstantModel(gamma * np.eye(n))
        p, q, r = 4.0 / 3.0, 2.0, 4.0
        for t in (0.25, 1.0, 3.0):
            general = decay_bound(model, t, p, q, r, 2.0, 1.3, 0.4)
            uniform = decay_bound_uniform(gamma, t, n, p, 2.0, 1.3, 0.4)
            assert general == pytest.approx(uniform, rel=1e-10)

    def test_singular_integral_closed_form(self):
        # lambda_min(a) = 1 + t on [0, 1]: F(t) - F(s) = (t - s)(1 + (t + s)/2)
        model = SmoothModel([("poly(1, 1)", np.eye(1))])
        from scipy.integrate import quad
        ref = quad(lambda s: ((1 - s) * (1 + (1 + s) / 2)) ** -0.5, 0, 1, epsabs=1e-13)[0]
        assert singular_budget_integral(model, 1.0, 0.5) == pytest.approx(ref, rel=1e-10)

    def test_singular_integral_step_kink(self, step_model):
        # F(2) - F(s) = 4 - s for s < 1 and 3(2 - s) for s > 1
        exact = 2 * (2 - math.sqrt(3)) + 2 / math.sqrt(3)
        assert singular_budget_integral(step_model, 2.0, 0.5) == pytest.approx(exact, rel=1e-10)

    def test_verify_decay_gaussian(self, grid1d, unit_model):
        u0 = GaussianState([[0.5]]).sample(grid1d)
        traj = solve_homogeneous(u0, unit_model, [0.0, 0.25, 1.0, 2.0])
        reps = verify_decay(traj, unit_model, 2.0, 1.0, 2.0, 2.0)
        assert all(r.satisfied for r in reps)
        assert reps[0].bound == math.inf

    def test_source_beta_norm(self, grid1d):
        u = GaussianState([[0.5]]).sample(grid1d)
        f = lambda s: u * math.exp(-s)
        got = source_beta_norm(f, 1.0, 2.0, 2.0)
        assert got == pytest.approx(u.norm(2) * math.sqrt((1 - math.exp(-2)) / 2), rel=1e-10)


def test_report_serialisation():
    rep = BoundReport.make("lplq", 1.0, 0.5, math.inf, p=1.0)
    d = rep.to_dict()
    assert d["bound"] == "inf" and d["ratio"] == 0.0
    json.dumps(d, allow_nan=False)
    assert not BoundReport.make("x", 0.0, 1.0, 1.0).scaled(0.5).satisfied
