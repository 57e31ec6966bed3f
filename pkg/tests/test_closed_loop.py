import numpy as np
import pytest

from app.control.closed_loop import (
    cost_from_samples,
    estimate_cost,
    initial_states,
    rsc_functional,
    simulate_batch,
    simulate_closed_loop,
    stabilization_fraction,
    wrapped_difference,
)
from app.control.policy import GainSchedule, LinearPolicy, ZeroPolicy
from app.core.exceptions import CostOverflowError, DivergenceError, DomainError, ShapeError
from app.filters.dual_enkf import run_dual_enkf
from app.models.presets import ScalarParams, make_scalar_model
from app.models.system import Objective
from app.solvers.riccati import integrate_dre


class TestRscFunctional:
    def test_constant_costs(self):
        assert rsc_functional(np.full(10, 3.0), 0.7) == pytest.approx(3.0)

    def test_two_point(self):
        assert rsc_functional(np.array([0.0, 1.0]), 1.0) == pytest.approx(np.log((1.0 + np.e) / 2.0))

    def test_large_costs_do_not_overflow(self):
        assert rsc_functional(np.array([1000.0, 1000.0]), 2.0) == pytest.approx(1000.0)

    def test_risk_seeking_is_below_mean(self):
        J = np.array([1.0, 2.0, 5.0])
        assert rsc_functional(J, -1.0) < J.mean() < rsc_functional(J, 1.0)

    def test_theta_zero_rejected(self):
        with pytest.raises(DomainError):
            rsc_functional(np.ones(3), 0.0)


class TestCostFromSamples:
    def test_soc(self, soc):
        estimate = cost_from_samples(np.array([1.0, 2.0, 3.0]), soc)
        assert estimate.value == pytest.approx(2.0)
        assert estimate.stderr == pytest.approx(1.0 / np.sqrt(3.0))
        assert estimate.kind == "soc"

    def test_rsc(self, leqgp):
        estimate = cost_from_samples(np.array([1.0, 1.0]), leqgp)
        assert estimate.value == pytest.approx(1.0)
        assert estimate.theta == 0.5
        assert estimate.kind == "rsc"

    def test_needs_two_samples(self, soc):
        with pytest.raises(DomainError):
            cost_from_samples(np.array([1.0]), soc)

    def test_non_finite_costs(self, soc):
        with pytest.raises(CostOverflowError):
            cost_from_samples(np.array([1.0, np.inf]), soc)


class TestSimulation:
    def test_uncontrolled_noise_free_cost(self, scalar_noiseless):
        lti, cost = scalar_noiseless
        traj = simulate_closed_loop(lti.to_system_model(), cost, ZeroPolicy(1), [2.0], T=1.0, dt=0.1, seed=0)
        assert np.allclose(traj.states, 2.0)
        assert traj.running_cost == pytest.approx(2.0)
        assert traj.terminal_cost == pytest.approx(2.0)
        assert traj.total_cost == pytest.approx(4.0)

    def test_optimal_feedback_noise_free_cost(self, scalar_noiseless, soc):
        lti, cost = scalar_noiseless
        schedule = GainSchedule.from_riccati(integrate_dre(soc, lti, cost, 1.0, 0.1), lti, cost)
        traj = simulate_closed_loop(lti.to_system_model(), cost, LinearPolicy(schedule), [2.0], T=1.0, dt=0.1, seed=0)
        # x_k = 2 * 0.9^k under u = -x
        decay = 0.81**10
        assert traj.states[-1, 0] == pytest.approx(2.0 * 0.9**10)
        assert traj.total_cost == pytest.approx(0.4 * (1.0 - decay) / 0.19 + 2.0 * decay)
        assert traj.controls.shape == (10, 1)

    def test_batch_rows_are_independent_of_batch_size(self, smd):
        lti, cost = smd
        model = lti.to_system_model()
        X0 = np.ones((6, 2))
        small = simulate_batch(model, cost, ZeroPolicy(1), X0[:2], 1.0, 0.1, seed=3)
        large = simulate_batch(model, cost, ZeroPolicy(1), X0, 1.0, 0.1, seed=3)
        assert np.array_equal(small.states, large.states[:2])
        assert large.M == 6

    def test_shape_checked(self, smd):
        lti, cost = smd
        with pytest.raises(ShapeError):
            simulate_batch(lti.to_system_model(), cost, ZeroPolicy(1), np.ones((2, 3)), 1.0, 0.1, seed=0)

    def test_divergence(self):
        lti, cost = make_scalar_model(ScalarParams(a=1000.0, sigma=0.0))
        with pytest.raises(DivergenceError):
            simulate_closed_loop(lti.to_system_model(), cost, ZeroPolicy(1), [1.0], T=20.0, dt=0.1, seed=0)

    def test_initial_states(self):
        X0 = initial_states(np.array([1.0, 2.0]), 5, 0.0, seed=0)
        assert np.array_equal(X0, np.tile([1.0, 2.0], (5, 1)))
        assert not np.allclose(initial_states(np.zeros(2), 5, 0.1, seed=0), 0.0)


def test_feedback_beats_uncontrolled_on_unstable_system(soc):
    lti, cost = make_scalar_model(ScalarParams(a=1.0, sigma=0.5))
    model = lti.to_system_model()
    schedule = GainSchedule.from_riccati(integrate_dre(soc, lti, cost, 2.0, 0.01), lti, cost)
    controlled = estimate_cost(model, cost, LinearPolicy(schedule), [1.0], 2.0, 0.01, 50, soc, seed=0)
    uncontrolled = estimate_cost(model, cost, ZeroPolicy(1), [1.0], 2.0, 0.01, 50, soc, seed=0)
    assert controlled.value < uncontrolled.value
    assert controlled.M == 50


def test_estimate_cost_requires_two_rollouts(smd, soc):
    lti, cost = smd
    with pytest.raises(DomainError):
        estimate_cost(lti.to_system_model(), cost, ZeroPolicy(1), np.zeros(2), 1.0, 0.1, 1, soc, seed=0)


class TestStabilization:
    def test_wrapped_difference(self):
        assert wrapped_difference(3.0 * np.pi, np.pi) == pytest.approx(0.0, abs=1e-12)
        assert wrapped_difference(0.1, 2.0 * np.pi - 0.1) == pytest.approx(0.2)

    def test_angular_coordinate_wraps(self):
        target = np.array([0.0, 0.0, np.pi, 0.0])
        final = np.array([[0.05, 1.0, 3.0 * np.pi + 0.02, 0.0], [0.05, 0.0, 0.0, 0.0]])
        fraction = stabilization_fraction(final, target, {0: 0.1, 2: 0.1}, angular={2: True})
        assert fraction == 0.5

    def test_without_wrapping(self):
        final = np.array([[0.0, 0.0, 3.0 * np.pi, 0.0]])
        target = np.array([0.0, 0.0, np.pi, 0.0])
        assert stabilization_fraction(final, target, {2: 0.1}) == 0.0


@pytest.fixture
def scalar_rollouts(scalar_lq, soc):
    lti, cost = scalar_lq
    schedule = GainSchedule.from_riccati(integrate_dre(soc, lti, cost, 1.0, 0.01), lti, cost)
    return simulate_batch(lti.to_system_model(), cost, LinearPolicy(schedule), np.ones((500, 1)), 1.0, 0.01, seed=7)


class TestRiskSensitiveLimits:
    def test_small_theta_matches_mean(self, scalar_rollouts):
        J = scalar_rollouts.total_costs
        assert rsc_functional(J, 1e-6) == pytest.approx(J.mean(), rel=1e-3)
        assert rsc_functional(J, -1e-6) == pytest.approx(J.mean(), rel=1e-3)

    def test_non_decreasing_in_theta(self, scalar_rollouts):
        J = scalar_rollouts.total_costs
        thetas = np.linspace(-2.0, 2.0, 81)
        values = np.array([rsc_functional(J, theta) for theta in thetas if theta != 0.0])
        assert np.all(np.diff(values) >= -1e-9 * np.abs(values).max())
        assert values[0] < J.mean() < values[-1]


def test_ensemble_gains_are_near_optimal(scalar_lq, soc):
    lti, cost = scalar_lq
    model = lti.to_system_model()
    traj = run_dual_enkf(lti, cost, soc, 1.0, 0.01, 1000, 0)
    enkf = GainSchedule.from_trajectory(traj, soc, lti, cost)
    riccati = GainSchedule.from_riccati(integrate_dre(soc, lti, cost, 1.0, 0.01), lti, cost)
    enkf_cost = estimate_cost(model, cost, LinearPolicy(enkf), [1.0], 1.0, 0.01, 500, soc, seed=11)
    riccati_cost = estimate_cost(model, cost, LinearPolicy(riccati), [1.0], 1.0, 0.01, 500, soc, seed=11)
    assert enkf_cost.value / riccati_cost.value <= 1.10


def test_cost_stderr_scales_with_rollouts(scalar_lq, soc):
    lti, cost = scalar_lq
    model = lti.to_system_model()
    policy = LinearPolicy(GainSchedule.from_riccati(integrate_dre(soc, lti, cost, 1.0, 0.01), lti, cost))
    small = estimate_cost(model, cost, policy, [1.0], 1.0, 0.01, 2000, soc, seed=5)
    large = estimate_cost(model, cost, policy, [1.0], 1.0, 0.01, 4000, soc, seed=5)
    # sqrt(2) up to the spread of the sample std
    assert 1.25 <= small.stderr / large.stderr <= 1.6
    batch = simulate_batch(model, cost, policy, np.ones((200, 1)), 1.0, 0.01, seed=5)
    assert np.all(batch.total_costs >= 0.0)
