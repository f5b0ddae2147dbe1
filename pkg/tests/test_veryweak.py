import numpy as np
import pytest

from anisoheat.diffusivity import ConstantModel, Mollifier, PiecewiseConstantModel, SmoothModel
from anisoheat.errors import MismatchedNets, NetConstructionError
from anisoheat.oracle import GaussianState
from anisoheat.propagator import SpatialGrid
from anisoheat.veryweak import (
    DEFAULT_EPSILONS, EpsNet, consistency_check, difference, moderateness_diagnostic,
    negligibility_diagnostic, net_energy_reports, solve_net, solve_trajectory,
)

STEP_TIMES = [0.0, 0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5]
SMOOTH_TIMES = [0.0, 0.5, 1.0]


@pytest.fixture(scope="module")
def step():
    return PiecewiseConstantModel([1.0], [np.eye(1), 3.0 * np.eye(1)])


@pytest.fixture(scope="module")
def u0_1d():
    return GaussianState([[0.5]]).sample(SpatialGrid(1, 256, 12.0))


@pytest.fixture(scope="module")
def step_net(step, u0_1d):
    return solve_net(EpsNet(step), u0_1d, None, STEP_TIMES)


@pytest.fixture(scope="module")
def u0_2d():
    return GaussianState(0.5 * np.eye(2)).sample(SpatialGrid(2, 64, 10.0))


class TestNetConstruction:
    def test_clearance(self, step):
        with pytest.raises(NetConstructionError):
            EpsNet(step, [0.6, 0.1])

    @pytest.mark.parametrize("eps", [[0.1, 0.2], [0.1, 0.1], [0.1, -0.01], []])
    def test_ordering(self, step, eps):
        with pytest.raises(NetConstructionError):
            EpsNet(step, eps)

    def test_default_epsilons(self, step):
        net = EpsNet(step)
        assert len(net) == 13 and net.epsilons[0] == pytest.approx(0.1) and net.epsilons[-1] == pytest.approx(1e-4)
        assert net.epsilons == DEFAULT_EPSILONS


class TestModerateness:
    def test_step_l2_flat_h1_reported(self, step_net):
        diag = moderateness_diagnostic(step_net)
        assert diag.fits["l2"].slope == pytest.approx(0.0, abs=0.05)
        assert diag.fits["h1"].stderr < 0.2
        assert diag.verdict == "moderate(0)" and diag.order == 0

    def test_smooth_model_order_zero(self, u0_2d):
        model = SmoothModel([("poly(1, 0, 1)", np.diag([1.0, 0.0])), ("const", np.diag([0.0, 2.0]))])
        sol = solve_net(EpsNet(model, DEFAULT_EPSILONS[::2]), u0_2d, None, SMOOTH_TIMES)
        diag = moderateness_diagnostic(sol)
        for fit in diag.fits.values():
            assert fit.slope == pytest.approx(0.0, abs=0.05)
        assert diag.order == 0

    def test_needs_enough_points(self, step, u0_1d):
        sol = solve_net(EpsNet(step, [0.1, 0.01]), u0_1d, None, STEP_TIMES)
        with pytest.raises(ValueError):
            moderateness_diagnostic(sol)


class TestNegligibility:
    def test_same_mollifier_identical(self, step, step_net, u0_1d):
        other = solve_net(EpsNet(step), u0_1d, None, STEP_TIMES)
        diag = negligibility_diagnostic(step_net, other)
        assert diag.verdict == "identical"
        assert max(diag.table["l2"]) == 0.0

    def test_two_bumps_positive_slope(self, step, step_net, u0_1d):
        other = solve_net(EpsNet(step, mollifier=Mollifier.bump(1)), u0_1d, None, STEP_TIMES)
        diag = negligibility_diagnostic(step_net, other)
        assert diag.fitted_slope > 0 and diag.stderr < 0.2
        assert diag.verdict in ("negligible", "decaying")

    def test_linear_smooth_base_mollifier_independent(self, u0_2d):
        model = SmoothModel([("poly(1, 1)", np.diag([1.0, 0.0])), ("const", np.diag([0.0, 2.0]))])
        eps = [e for e in DEFAULT_EPSILONS if e < 1e-2][::2]
        a = solve_net(EpsNet(model, eps), u0_2d, None, SMOOTH_TIMES)
        b = solve_net(EpsNet(model, eps, Mollifier.bump(1)), u0_2d, None, SMOOTH_TIMES)
        assert max(negligibility_diagnostic(a, b).table["l2"]) <= 1e-10

    def test_curved_smooth_base_second_order(self, u0_2d):
        model = SmoothModel([("cos(1)", np.diag([1.0, 0.0])), ("const", np.diag([1.5, 2.0]))])
        a = solve_net(EpsNet(model, DEFAULT_EPSILONS[::2]), u0_2d, None, SMOOTH_TIMES)
        b = solve_net(EpsNet(model, DEFAULT_EPSILONS[::2], Mollifier.bump(1)), u0_2d, None, SMOOTH_TIMES)
        diag = negligibility_diagnostic(a, b)
        assert diag.fitted_slope == pytest.approx(2.0, abs=0.1)
        assert diag.verdict == "negligible"

    def test_mismatched(self, step, step_net, u0_1d):
        other = solve_net(EpsNet(step, [0.1, 0.05, 0.01]), u0_1d, None, STEP_TIMES)
        with pytest.raises(MismatchedNets):
            negligibility_diagnostic(step_net, other)
        with pytest.raises(MismatchedNets):
            difference(step_net[0], solve_trajectory(step, u0_1d, None, [0.0, 1.0]))


class TestConsistency:
    def test_step_decays_linearly(self, step_net):
        diag = consistency_check(step_net)
        assert diag.fitted_slope == pytest.approx(1.0, abs=0.05)
        assert diag.stderr < 0.2
        assert diag.table["l2"][0] > diag.table["l2"][-1]

    def test_smooth_second_order_robust_to_range(self, u0_2d):
        model = SmoothModel([("poly(1, 0, 1)", np.diag([1.0, 0.0])), ("const", np.diag([0.0, 2.0]))])
        sol = solve_net(EpsNet(model), u0_2d, None, SMOOTH_TIMES)
        full = consistency_check(sol)
        assert full.fitted_slope == pytest.approx(2.0, abs=0.3)
        half = solve_net(EpsNet(model, DEFAULT_EPSILONS[:7]), u0_2d, None, SMOOTH_TIMES)
        part = consistency_check(half)
        assert part.fitted_slope == pytest.approx(full.fitted_slope, abs=0.3)

    def test_constant_model_identical(self, u0_1d):
        sol = solve_net(EpsNet(ConstantModel([[1.0]])), u0_1d, None, STEP_TIMES)
        assert consistency_check(sol).verdict == "identical"

    def test_serialisation(self, step_net):
        diag = consistency_check(step_net)
        d = diag.to_dict()
        assert d["fits"]["l2"]["stderr"] == diag.stderr
        assert len(diag.csv_rows()) == len(step_net) + 1


def test_energy_uniform_in_eps(step_net):
    reps = net_energy_reports(step_net)
    assert len(reps) == len(step_net) * len(STEP_TIMES)
    assert all(r.satisfied for r in reps)


def test_threads_deterministic(step, u0_1d, step_net):
    again = solve_net(EpsNet(step), u0_1d, None, STEP_TIMES, workers=4)
    for a, b in zip(step_net, again):
        for x, y in zip(a.states, b.states):
            assert np.array_equal(x.values, y.values)
