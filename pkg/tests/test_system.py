import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import AssumptionViolationError, DomainError, ShapeError
from app.models.enums import ObjectiveKind, Variant
from app.models.presets import PendulumParams, SmdParams, make_pendulum_model, make_smd_model
from app.models.system import (
    CostSpec,
    LtiSystem,
    Objective,
    check_lq_shapes,
    ensure_lq_assumptions,
    validate_lq_assumptions,
)


class TestObjective:
    def test_soc_drops_theta(self):
        obj = Objective(ObjectiveKind.SOC, theta=3.0)
        assert obj.theta == 0.0
        assert obj.kappa == 1.0
        assert obj.variant == Variant.LQG

    def test_rsc_requires_nonzero_theta(self):
        with pytest.raises(DomainError):
            Objective.rsc(0.0)
        with pytest.raises(DomainError):
            Objective.rsc(float("inf"))

    def test_kappa_and_variant(self):
        assert Objective.rsc(-2.5).kappa == 2.5
        assert Objective.rsc(-2.5).variant == Variant.LEQGN
        assert Objective.rsc(0.5).variant == Variant.LEQGP

    def test_from_variant_uses_magnitude(self):
        assert Objective.from_variant(Variant.LEQGN, 2.0).theta == -2.0
        assert Objective.from_variant(Variant.LEQGP, -2.0).theta == 2.0
        assert Objective.from_variant("LQG").is_rsc is False


class TestLtiSystem:
    def test_dimensions(self):
        lti = LtiSystem(A=np.zeros((3, 3)), B=np.ones((3, 2)), sigma=np.ones((3, 1)))
        assert (lti.d, lti.m, lti.d_w) == (3, 2, 1)
        assert np.array_equal(lti.Sigma, np.ones((3, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            LtiSystem(A=np.zeros((2, 2)), B=np.ones((3, 1)), sigma=np.ones((2, 1)))

    def test_arrays_are_read_only(self):
        lti = LtiSystem(A=[[0.0]], B=[[1.0]], sigma=[[1.0]])
        with pytest.raises(ValueError):
            lti.A[0, 0] = 1.0

    def test_as_system_model(self, smd):
        lti, _ = smd
        model = lti.to_system_model()
        x = np.array([[1.0, 2.0], [0.5, -1.0]])
        assert np.allclose(model.a(x), x @ lti.A.T)
        assert model.b(x).shape == (2, 2, 1)
        assert model.sigma(x).shape == (2, 2, 1)
        assert model.divergence(np.zeros(2)) == pytest.approx(np.trace(lti.A), abs=1e-8)
        assert np.allclose(model.linearize().A, lti.A, atol=1e-8)


class TestCostSpec:
    def test_r_must_be_positive_definite(self):
        with pytest.raises(DomainError):
            CostSpec(R=[[0.0]], G=[[1.0]], C=[[1.0]])

    def test_g_must_be_symmetric(self):
        with pytest.raises(DomainError):
            CostSpec(R=[[1.0]], G=[[1.0, 1.0], [0.0, 1.0]], C=np.eye(2))

    def test_needs_output(self):
        with pytest.raises(DomainError):
            CostSpec(R=[[1.0]], G=[[1.0]])

    def test_running_and_terminal(self):
        cost = CostSpec(R=[[2.0]], G=[[4.0]], C=[[3.0]], target=[1.0])
        x = np.array([[2.0]])
        u = np.array([[1.0]])
        assert cost.running(x, u)[0] == pytest.approx(0.5 * (9.0 + 2.0))
        assert cost.terminal(x)[0] == pytest.approx(2.0)
        assert cost.shifted().terminal(np.array([[1.0]]))[0] == pytest.approx(2.0)

    def test_r_inverse(self):
        cost = CostSpec(R=[[2.0, 0.0], [0.0, 4.0]], G=[[1.0]], C=[[1.0]])
        assert np.allclose(cost.R_inv, np.diag([0.5, 0.25]))


class TestAssumptions:
    def test_smd_passes_all_variants(self, smd, any_objective):
        lti, cost = smd
        assert validate_lq_assumptions(lti, cost, any_objective).passed

    def test_uncontrollable(self):
        lti = LtiSystem(A=np.diag([1.0, 2.0]), B=[[1.0], [0.0]], sigma=np.zeros((2, 1)))
        cost = CostSpec(R=[[1.0]], G=np.eye(2), C=np.eye(2))
        report = validate_lq_assumptions(lti, cost, Objective.soc())
        assert not report.controllable
        with pytest.raises(AssumptionViolationError) as info:
            ensure_lq_assumptions(lti, cost, Objective.soc())
        assert info.value.failed == ["controllability"]

    def test_unobservable(self):
        lti = LtiSystem(A=np.diag([1.0, 2.0]), B=np.eye(2), sigma=np.zeros((2, 1)))
        cost = CostSpec(R=np.eye(2), G=np.eye(2), C=[[1.0, 0.0]])
        assert validate_lq_assumptions(lti, cost, Objective.soc()).failures() == ["observability"]

    def test_risk_averse_noise_breaks_positivity(self, scalar_lq):
        lti, cost = scalar_lq
        report = validate_lq_assumptions(lti, cost, Objective.rsc(2.0))
        assert report.failures() == ["positivity"]
        assert report.min_eigenvalue == pytest.approx(-1.0)

    @pytest.mark.parametrize("theta, passes", [(0.5, True), (8.0, False), (-1.0, True)])
    def test_invariant_under_change_of_coordinates(self, smd, theta, passes):
        lti, cost = smd
        obj = Objective.rsc(theta)
        T = np.array([[2.0, 1.0], [0.0, 1.0]])
        T_inv = np.linalg.inv(T)
        G = T_inv.T @ cost.G @ T_inv
        lti_t = LtiSystem(A=T @ lti.A @ T_inv, B=T @ lti.B, sigma=T @ lti.sigma)
        cost_t = CostSpec(R=cost.R, G=0.5 * (G + G.T), C=cost.C @ T_inv)
        original = validate_lq_assumptions(lti, cost, obj)
        transformed = validate_lq_assumptions(lti_t, cost_t, obj)
        assert original.passed == transformed.passed == passes
        assert original.failures() == transformed.failures()

    def test_shapes_checked(self, scalar_lq):
        lti, _ = scalar_lq
        with pytest.raises(ShapeError):
            check_lq_shapes(lti, CostSpec(R=np.eye(2), G=[[1.0]], C=[[1.0]]))


class TestPresets:
    def test_smd_matrices(self):
        lti, cost = make_smd_model(SmdParams(mass=2.0, stiffness=4.0, damping=1.0, noise_scale=0.5))
        assert np.allclose(lti.A, [[0.0, 1.0], [-2.0, -0.5]])
        assert np.allclose(lti.B, [[0.0], [0.5]])
        assert np.allclose(lti.sigma, [[0.0], [0.25]])
        assert np.allclose(cost.G, np.eye(2))

    def test_smd_rejects_nonpositive_mass(self):
        with pytest.raises(DomainError):
            make_smd_model(SmdParams(mass=0.0))

    def test_unknown_preset_parameter(self):
        with pytest.raises(ValidationError):
            SmdParams(spring=1.0)

    def test_pendulum_upright_is_equilibrium(self, pendulum):
        model, cost = pendulum
        assert np.allclose(model.target, [0.0, 0.0, np.pi, 0.0])
        assert np.allclose(model.a(model.target), 0.0, atol=1e-12)
        assert np.allclose(model.b(model.target)[:, 0], [0.0, 1.0, 0.0, 1.0])
        assert cost.terminal(model.target) == pytest.approx(0.0)

    def test_pendulum_linearization_is_unstable(self, pendulum):
        model, _ = pendulum
        eigenvalues = np.linalg.eigvals(model.linearize().A)
        assert np.max(eigenvalues.real) > 0.0

    def test_pendulum_hanging_is_stable_equilibrium(self):
        model, _ = make_pendulum_model(PendulumParams(noise_scale=0.0))
        assert np.allclose(model.a(np.zeros(4)), 0.0)
        assert model.divergence(np.zeros(4)) == pytest.approx(0.0, abs=1e-6)

    def test_pendulum_shifted_coordinates(self, pendulum):
        model, _ = pendulum
        shifted = model.shifted()
        e = np.array([0.1, 0.0, 0.05, 0.0])
        assert np.allclose(shifted.a(e), model.a(e + model.target))
        assert np.allclose(shifted.target, 0.0)
