import numpy as np
import pytest
from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import DomainError, ResolutionError, ShapeError
from app.diagnostics.oracles import (
    ConvergenceCurve,
    ConvergencePoint,
    build_grid_density,
    convergence_curve,
    dual_consistency,
    gaussianity,
    observation_function,
    poisson_residual_1d,
    seed_sweep_errors,
)
from app.filters.dual_enkf import run_dual_enkf
from app.filters.ensemble import EnkfOptions, Ensemble
from app.models.enums import SnapshotMode
from app.models.system import Objective
from app.solvers.riccati import RiccatiSolution


class TestGridDensity:
    def test_mass_is_one(self):
        grid = build_grid_density(2.0, L=12.0)
        assert grid.mass() == pytest.approx(1.0, abs=1e-8)
        assert grid.expectation(grid.x**2) == pytest.approx(2.0, abs=1e-6)

    def test_resolution_limit(self):
        with pytest.raises(ResolutionError):
            build_grid_density(1e-4, h=1e-2)

    def test_nonpositive_variance(self):
        with pytest.raises(DomainError):
            build_grid_density(0.0)


class TestPoissonResidual:
    @pytest.mark.parametrize("S", [0.5, 1.0, 2.0])
    def test_lq_fields_solve_both_equations(self, scalar_lq, any_objective, S):
        lti, cost = scalar_lq
        grid = build_grid_density(S, L=12.0)
        residual_I, residual_C = poisson_residual_1d(any_objective, lti, cost, S, grid)
        assert residual_I < 1e-4
        assert residual_C < 1e-4

    @pytest.mark.parametrize("field_scale", [0.9, 1.1])
    def test_wrong_field_is_detected(self, scalar_lq, any_objective, field_scale):
        lti, cost = scalar_lq
        grid = build_grid_density(1.0)
        residual_I, _ = poisson_residual_1d(any_objective, lti, cost, 1.0, grid, field_scale=field_scale)
        assert residual_I > 1e-2

    def test_grid_must_match_variance(self, scalar_lq, soc):
        lti, cost = scalar_lq
        with pytest.raises(DomainError):
            poisson_residual_1d(soc, lti, cost, 2.0, build_grid_density(1.0))

    def test_requires_scalar_instance(self, smd, soc):
        lti, cost = smd
        with pytest.raises(ShapeError):
            poisson_residual_1d(soc, lti, cost, 1.0, build_grid_density(1.0))

    def test_observation_function_quadratic_coefficient(self, scalar_lq):
        lti, cost = scalar_lq
        x = np.array([0.0, 1.0])
        for obj, coefficient in [(Objective.soc(), 0.5), (Objective.rsc(-2.0), 1.0), (Objective.rsc(3.0), 1.5)]:
            h = observation_function(obj, lti, cost, 1.0, x)
            assert h[1] - h[0] == pytest.approx(coefficient)


class TestDualConsistency:
    def _solution(self, S_scale, theta=None):
        obj = Objective.soc() if theta is None else Objective.rsc(theta)
        grid = np.linspace(0.0, 1.0, 3)
        P = np.stack([2.0 * np.eye(2)] * 3)
        S = np.stack([S_scale * np.eye(2)] * 3)
        return RiccatiSolution(time_grid=grid, P=P, g=np.zeros(3), S=S, objective=obj)

    def test_exact_inverse(self):
        assert dual_consistency(self._solution(0.5)) == pytest.approx(0.0)

    def test_kappa_enters(self):
        assert dual_consistency(self._solution(0.25, theta=-2.0)) == pytest.approx(0.0)

    def test_mismatch(self):
        assert dual_consistency(self._solution(0.4)) == pytest.approx(0.2 * np.sqrt(2.0))


class TestConvergence:
    def test_curve_must_increase(self):
        point = ConvergencePoint(N=10, mean_error=1.0, std=0.2, std_error=0.1, seeds=3)
        with pytest.raises(ValidationError):
            ConvergenceCurve(points=[point, point])

    def test_is_decreasing(self):
        curve = ConvergenceCurve(
            points=[
                ConvergencePoint(N=10, mean_error=1.0, std=0.2, std_error=0.1, seeds=3),
                ConvergencePoint(N=100, mean_error=0.3, std=0.1, std_error=0.05, seeds=3),
            ]
        )
        assert curve.mean_errors() == [1.0, 0.3]
        assert curve.is_decreasing()

    def test_error_shrinks_with_particles(self, scalar_lq, soc):
        lti, cost = scalar_lq
        curve = convergence_curve((lti, cost, soc), Ns=[10, 1000], seeds=5, T=0.5, dt=0.05)
        assert [p.N for p in curve.points] == [10, 1000]
        assert curve.is_decreasing()
        for point in curve.points:
            assert point.std_error == pytest.approx(point.std / np.sqrt(5))

    def test_rejects_bad_arguments(self, scalar_lq, soc):
        lti, cost = scalar_lq
        with pytest.raises(DomainError):
            convergence_curve((lti, cost, soc), Ns=[100, 10], seeds=2)
        with pytest.raises(DomainError):
            convergence_curve((lti, cost, soc), Ns=[10], seeds=0)

    def test_parallel_sweep_matches_sequential(self, scalar_lq, soc, monkeypatch):
        lti, cost = scalar_lq
        args = (lti, cost, soc, 0.5, 0.05, 20, [0, 1, 2], np.eye(1))
        sequential = seed_sweep_errors(*args)
        monkeypatch.setattr(settings, "WORKERS", 3)
        assert np.array_equal(seed_sweep_errors(*args), sequential)

    def test_relative_errors(self, scalar_lq, soc):
        lti, cost = scalar_lq
        args = (lti, cost, soc, 0.5, 0.05, 20, [0, 1], 2.0 * np.eye(1))
        absolute = seed_sweep_errors(*args)
        assert np.allclose(seed_sweep_errors(*args, relative=True), absolute / 2.0)


def test_gaussianity(rng):
    Z = rng.standard_normal((500, 2))
    symmetric = np.concatenate([Z, -Z])
    skewed = rng.exponential(size=(1000, 1))
    assert np.all(np.abs(gaussianity(Ensemble(particles=symmetric))) < 0.2)
    assert gaussianity(Ensemble(particles=skewed))[0] > 1.0


def test_ensemble_stays_symmetric_along_horizon(smd, any_objective):
    lti, cost = smd
    traj = run_dual_enkf(lti, cost, any_objective, 1.0, 0.01, 4000, 2, EnkfOptions(snapshots=SnapshotMode.FULL))
    for k in range(0, len(traj.time_grid), 25):
        assert np.all(np.abs(gaussianity(Ensemble(particles=traj.snapshots[k]))) < 0.2)


@pytest.mark.slow
def test_smd_error_decreases_over_three_decades(smd, soc):
    lti, cost = smd
    curve = convergence_curve((lti, cost, soc), Ns=[100, 1000, 10_000], seeds=20, T=5.0, dt=0.01)
    assert curve.is_decreasing()
    assert curve.points[-1].mean_error < 0.5 * curve.points[0].mean_error
