"""
Experiment Runner

Central coordinator of a CLI run. Builds the problem instance from an
ExperimentConfig, dispatches to the handler for the requested subcommand and
routes every result through an ArtifactWriter:

- riccati:  DRE / dual DRE / ARE reference curves
- enkf:     dual EnKF on an LQ instance, compared against the DRE
- ga-enkf:  Gaussian-approximation dual EnKF on a nonlinear model
- rollout:  closed-loop Monte-Carlo rollouts under an extracted policy
- diagnose: numerical oracles (poisson, dual, convergence)
- smd:      three-variant convergence sweep on the spring-mass-damper
- pendulum: three-variant stabilization of the inverted cart-pole

Every run writes manifest.json first, so a failed run still records what was
attempted.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel

from app.control.closed_loop import (
    CostEstimate,
    RolloutBatch,
    cost_from_samples,
    initial_states,
    simulate_batch,
    stabilization_fraction,
)
from app.control.policy import (
    GainSchedule,
    HamiltonianOracle,
    HamiltonianPolicy,
    LinearPolicy,
    ModelSimulator,
    Policy,
    ZeroPolicy,
)
from app.core.config import ExperimentConfig
from app.core.exceptions import ConfigurationError
from app.diagnostics.oracles import (
    build_grid_density,
    convergence_curve,
    dual_consistency,
    poisson_residual_1d,
    seed_sweep_errors,
)
from app.filters.dual_enkf import run_dual_enkf
from app.filters.ensemble import EnkfOptions, EnsembleTrajectory
from app.filters.gauss_approx import run_ga_enkf
from app.models.enums import DiagnosticCheck, DualMode, GainMode, ObjectiveKind, SnapshotMode, SystemPreset, Variant
from app.models.presets import make_pendulum_model, make_scalar_model, make_smd_model
from app.models.reports import (
    DiagnosticReport,
    EnkfSummary,
    PendulumSummary,
    PendulumVariantResult,
    RiccatiSummary,
    RolloutSummary,
    SmdSummary,
    VariantError,
)
from app.models.system import (
    CostSpec,
    LtiSystem,
    Objective,
    SystemModel,
    ensure_lq_assumptions,
    validate_lq_assumptions,
)
from app.orchestrator.artifacts import (
    ArtifactWriter,
    comparison_header,
    comparison_rows,
    riccati_header,
    riccati_rows,
    rollout_header,
    rollout_rows,
    schedule_header,
    schedule_rows,
)
from app.solvers.riccati import are_residual, integrate_dre, solve_are

logger = structlog.get_logger(__name__)

POISSON_TOL = 1e-4
DUAL_TOL = 1e-6
PENDULUM_ANGLE = 2
PENDULUM_POSITION = 0


@dataclass(frozen=True, eq=False)
class Problem:
    """
    Model, cost and objective of one run.

    lti is the system itself for linear presets and the linearization at the
    target for nonlinear ones; it supplies the known-B gains.
    """

    model: SystemModel
    cost: CostSpec
    obj: Objective
    lti: LtiSystem
    linear: bool

    @property
    def target(self) -> np.ndarray:
        return self.model.target


def objective_from_config(cfg: ExperimentConfig) -> Objective:
    if cfg.objective.kind == ObjectiveKind.RSC:
        return Objective.rsc(cfg.objective.theta)
    return Objective.soc()


def build_problem(cfg: ExperimentConfig, obj: Objective = None) -> Problem:
    """
    Raises:
        ConfigurationError: custom preset without matrices
        DomainError, ShapeError: invalid preset parameters or matrices
    """
    obj = obj or objective_from_config(cfg)
    preset = cfg.system.preset

    if preset == SystemPreset.PENDULUM:
        model, cost = make_pendulum_model(cfg.system.pendulum)
        return Problem(model=model, cost=cost, obj=obj, lti=model.linearize(), linear=False)

    if preset == SystemPreset.SMD:
        lti, cost = make_smd_model(cfg.system.smd)
    elif preset == SystemPreset.SCALAR:
        lti, cost = make_scalar_model(cfg.system.scalar)
    else:
        custom = cfg.system.custom
        if custom is None:
            raise ConfigurationError("system.custom", message="Preset 'custom' requires a [system.custom] table")
        lti = LtiSystem(A=custom.A, B=custom.B, sigma=custom.sigma, name="custom")
        cost = CostSpec(R=custom.R, G=custom.G, C=custom.C)
    return Problem(model=lti.to_system_model(), cost=cost, obj=obj, lti=lti, linear=True)


def enkf_options(cfg: ExperimentConfig, snapshots: SnapshotMode = None) -> EnkfOptions:
    return EnkfOptions(
        prop2=cfg.solver.prop2,
        snapshots=cfg.solver.snapshots if snapshots is None else snapshots,
        eta_convention=cfg.solver.eta_convention,
    )


def default_initial_state(problem: Problem) -> np.ndarray:
    """Target plus a small tilt for the pendulum; the all-ones state otherwise"""
    if problem.linear:
        return problem.target + np.ones(problem.model.d)
    offset = np.zeros(problem.model.d)
    offset[PENDULUM_ANGLE] = 0.1
    return problem.target + offset


def _matrix(M: np.ndarray) -> List[List[float]]:
    return np.atleast_2d(M).tolist()


class ExperimentRunner:
    """
    Runs one subcommand against one configuration.

    Handlers return the JSON summary they wrote; artifacts land in
    <output.directory>/<command>/.
    """

    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg = cfg
        self.command = command
        self._handlers: Dict[str, Callable[[], BaseModel]] = {
            "riccati": self.run_riccati,
            "enkf": self.run_enkf,
            "ga-enkf": self.run_ga_enkf,
            "rollout": self.run_rollout,
            "diagnose": self.run_diagnose,
            "smd": self.run_smd,
            "pendulum": self.run_pendulum,
        }
        if command not in self._handlers:
            raise ConfigurationError("command", message=f"Unknown subcommand: {command}")
        self.writer = ArtifactWriter(cfg.output.directory, command, cfg.output.format)

    def run(self) -> BaseModel:
        self.writer.write_manifest(self.cfg)
        logger.info("run_started", command=self.command, directory=str(self.writer.directory), seed=self.cfg.solver.seed)
        result = self._handlers[self.command]()
        logger.info("run_complete", command=self.command, files=len(self.writer.written))
        return result

    # -- shared pieces ------------------------------------------------------

    def _linear_problem(self, obj: Objective = None) -> Problem:
        problem = build_problem(self.cfg, obj)
        if not problem.linear:
            raise ConfigurationError(
                "system.preset",
                message=f"Subcommand '{self.command}' needs a linear preset; use ga-enkf for '{self.cfg.system.preset}'",
            )
        return problem

    def _run_filter(self, problem: Problem, options: EnkfOptions) -> EnsembleTrajectory:
        solver = self.cfg.solver
        if problem.linear:
            return run_dual_enkf(problem.lti, problem.cost, problem.obj, solver.T, solver.dt, solver.N, solver.seed, options)
        return run_ga_enkf(problem.model, problem.cost, problem.obj, solver.T, solver.dt, solver.N, solver.seed, options)

    def _gain_mode(self, problem: Problem) -> GainMode:
        if self.cfg.policy.gain_mode is not None:
            return self.cfg.policy.gain_mode
        return GainMode.SCHEDULE if problem.linear else GainMode.STATIONARY

    def _schedule(self, problem: Problem, traj: EnsembleTrajectory) -> GainSchedule:
        window = self.cfg.policy.stationary_window
        if self._gain_mode(problem) == GainMode.STATIONARY and window > 0.0:
            return GainSchedule.stationary_from_trajectory(traj, problem.obj, window, problem.lti, problem.cost)
        return GainSchedule.from_trajectory(traj, problem.obj, problem.lti, problem.cost)

    def _policy(self, problem: Problem, schedule: GainSchedule) -> Tuple[Policy, Optional[HamiltonianOracle]]:
        schedule = schedule.with_mode(self._gain_mode(problem))
        if not self.cfg.policy.model_free:
            return LinearPolicy(schedule, target=problem.target), None
        simulator = ModelSimulator(
            problem.model.shifted(),
            step=self.cfg.rollout.dt,
            n_samples=self.cfg.policy.n_samples,
            seed=self.cfg.solver.seed,
        )
        oracle = HamiltonianOracle(simulator, problem.cost.shifted())
        return HamiltonianPolicy(schedule, oracle, problem.cost.shifted(), target=problem.target), oracle

    def _rollouts(self, problem: Problem, policy: Policy) -> RolloutBatch:
        ro = self.cfg.rollout
        x0 = default_initial_state(problem) if ro.x0 is None else np.asarray(ro.x0, dtype=float)
        X0 = initial_states(x0, ro.M, ro.init_spread, self.cfg.solver.seed)
        return simulate_batch(problem.model, problem.cost, policy, X0, ro.T, ro.dt, self.cfg.solver.seed)

    def _stabilized(self, problem: Problem, batch: RolloutBatch) -> Optional[float]:
        if problem.linear:
            return None
        ro = self.cfg.rollout
        return stabilization_fraction(
            batch.final_states,
            problem.target,
            tolerances={PENDULUM_POSITION: ro.position_tolerance, PENDULUM_ANGLE: ro.angle_tolerance},
            angular={PENDULUM_ANGLE: True},
        )

    def _rollout_summary(
        self,
        problem: Problem,
        estimate: CostEstimate,
        fraction: Optional[float],
        policy_name: str,
        oracle: HamiltonianOracle = None,
    ) -> RolloutSummary:
        return RolloutSummary(
            variant=str(problem.obj.variant),
            M=estimate.M,
            T=self.cfg.rollout.T,
            dt=self.cfg.rollout.dt,
            value=estimate.value,
            stderr=estimate.stderr,
            kind=estimate.kind,
            theta=estimate.theta,
            stabilized_fraction=fraction,
            policy=policy_name,
            oracle_queries=None if oracle is None else oracle.query_count,
        )

    # -- subcommands --------------------------------------------------------

    def run_riccati(self) -> RiccatiSummary:
        problem = build_problem(self.cfg)
        solver = self.cfg.solver
        lti, cost, obj = problem.lti, problem.cost.shifted(), problem.obj

        sol = integrate_dre(obj, lti, cost, solver.T, solver.dt, dual=solver.dual)
        P_inf = solve_are(obj, lti, cost, tol=solver.are_tol, t_max=solver.are_t_max, dt=solver.dt)

        self.writer.write_table("riccati", riccati_header(sol), riccati_rows(sol))
        summary = RiccatiSummary(
            variant=str(obj.variant),
            theta=obj.theta,
            T=solver.T,
            dt=solver.dt,
            P0=_matrix(sol.P[0]),
            g0=float(sol.g[0]),
            S0=_matrix(sol.S[0]),
            are_solution=_matrix(P_inf),
            are_residual=are_residual(obj, lti, cost, P_inf),
            dual_consistency=dual_consistency(sol),
        )
        self.writer.write_json("summary.json", summary)
        return summary

    def _enkf_summary(self, problem: Problem, traj: EnsembleTrajectory, reference: Optional[np.ndarray]) -> EnkfSummary:
        solver = self.cfg.solver
        error = relative = None
        if reference is not None:
            error = float(np.linalg.norm(traj.S0 - reference, "fro"))
            relative = error / float(np.linalg.norm(reference, "fro"))
        return EnkfSummary(
            variant=str(problem.obj.variant),
            theta=problem.obj.theta,
            N=solver.N,
            T=solver.T,
            dt=solver.dt,
            seed=solver.seed,
            n0=traj.n0.tolist(),
            S0=_matrix(traj.S0),
            reference_S0=None if reference is None else _matrix(reference),
            error=error,
            relative_error=relative,
            noise=traj.meta.get("noise", {}),
            model_free=bool(traj.meta.get("model_free", False)),
            coordinates=traj.meta.get("coordinates", "state"),
        )

    def _write_trajectory(self, problem: Problem, traj: EnsembleTrajectory) -> GainSchedule:
        self.writer.write_table("enkf", traj.header(), traj.to_rows())
        if traj.snapshots is not None:
            d = traj.d
            rows = [
                [float(t), i] + traj.snapshots[k, i].tolist()
                for k, t in enumerate(traj.time_grid)
                for i in range(traj.snapshots.shape[1])
            ]
            self.writer.write_table("particles", ["t", "particle"] + [f"y_{j}" for j in range(d)], rows)
        schedule = GainSchedule.from_trajectory(traj, problem.obj, problem.lti, problem.cost)
        self.writer.write_table("gains", schedule_header(schedule), schedule_rows(schedule))
        return schedule

    def run_enkf(self) -> EnkfSummary:
        problem = self._linear_problem()
        solver = self.cfg.solver
        traj = self._run_filter(problem, enkf_options(self.cfg))
        reference = integrate_dre(problem.obj, problem.lti, problem.cost, solver.T, solver.dt).S[0]

        self._write_trajectory(problem, traj)
        summary = self._enkf_summary(problem, traj, reference)
        self.writer.write_json("summary.json", summary)
        return summary

    def run_ga_enkf(self) -> EnkfSummary:
        problem = build_problem(self.cfg)
        solver = self.cfg.solver
        traj = self._run_filter(problem, enkf_options(self.cfg))

        # The linearized LQ problem is only a meaningful reference when it satisfies the standing assumptions
        lq_cost = problem.cost.shifted()
        reference = None
        if validate_lq_assumptions(problem.lti, lq_cost, problem.obj).passed:
            reference = integrate_dre(problem.obj, problem.lti, lq_cost, solver.T, solver.dt).S[0]
        else:
            logger.info("linearized_reference_skipped", variant=str(problem.obj.variant))

        self._write_trajectory(problem, traj)
        summary = self._enkf_summary(problem, traj, reference)
        self.writer.write_json("summary.json", summary)
        return summary

    def run_rollout(self) -> RolloutSummary:
        problem = build_problem(self.cfg)
        traj = self._run_filter(problem, enkf_options(self.cfg, snapshots=SnapshotMode.STATS))
        schedule = self._schedule(problem, traj)
        policy, oracle = self._policy(problem, schedule)

        batch = self._rollouts(problem, policy)
        estimate = cost_from_samples(batch.total_costs, problem.obj)
        summary = self._rollout_summary(
            problem,
            estimate,
            self._stabilized(problem, batch),
            "model-free" if oracle is not None else "linear",
            oracle,
        )
        self.writer.write_table("trajectories", rollout_header(batch), rollout_rows(batch))
        self.writer.write_json("summary.json", summary)
        logger.info("rollout_complete", variant=summary.variant, value=summary.value, stderr=summary.stderr)
        return summary

    def run_diagnose(self) -> DiagnosticReport:
        check = DiagnosticCheck(self.cfg.diagnostics.check)
        if check == DiagnosticCheck.POISSON:
            report = self._diagnose_poisson()
        elif check == DiagnosticCheck.DUAL:
            report = self._diagnose_dual()
        else:
            report = self._diagnose_convergence()
        self.writer.write_json("report.json", report)
        logger.info("diagnostic_complete", check=str(check), passed=report.passed)
        return report

    def _diagnose_poisson(self) -> DiagnosticReport:
        diag = self.cfg.diagnostics
        lti, cost = make_scalar_model(self.cfg.system.scalar)
        grid = build_grid_density(diag.S, L=diag.grid_L, h=diag.grid_h)
        values = {}
        for variant in self.cfg.objective.variants:
            obj = Objective.from_variant(variant, self.cfg.objective.sweep_theta)
            residual_I, residual_C = poisson_residual_1d(obj, lti, cost, diag.S, grid, field_scale=diag.field_scale)
            values[str(variant)] = {"residual_I": residual_I, "residual_C": residual_C}
        passed = all(v["residual_I"] < POISSON_TOL and v["residual_C"] < POISSON_TOL for v in values.values())
        return DiagnosticReport(check=str(DiagnosticCheck.POISSON), passed=passed, values=values)

    def _diagnose_dual(self) -> DiagnosticReport:
        problem = self._linear_problem()
        solver = self.cfg.solver
        sol = integrate_dre(problem.obj, problem.lti, problem.cost, solver.T, solver.dt, dual=DualMode.INTEGRATED)
        value = dual_consistency(sol)
        return DiagnosticReport(
            check=str(DiagnosticCheck.DUAL),
            passed=value < DUAL_TOL,
            values={"dual_consistency": value, "variant": str(problem.obj.variant), "dt": solver.dt},
        )

    def _diagnose_convergence(self) -> DiagnosticReport:
        problem = self._linear_problem()
        solver, diag = self.cfg.solver, self.cfg.diagnostics
        curve = convergence_curve(
            (problem.lti, problem.cost, problem.obj),
            diag.Ns,
            diag.seeds,
            T=solver.T,
            dt=solver.dt,
            base_seed=solver.seed,
            options=enkf_options(self.cfg),
        )
        rows = [[p.N, p.mean_error, p.std, p.std_error, p.seeds] for p in curve.points]
        self.writer.write_table("convergence", ["N", "mean_error", "std", "std_error", "seeds"], rows)
        return DiagnosticReport(
            check=str(DiagnosticCheck.CONVERGENCE),
            passed=curve.is_decreasing(),
            values=curve.model_dump(),
        )

    def run_smd(self) -> SmdSummary:
        """Convergence of S^(N)_t to the DRE for every configured variant on the SMD preset"""
        solver = self.cfg.solver
        lti, cost = make_smd_model(self.cfg.system.smd)
        objectives = [Objective.from_variant(v, self.cfg.objective.sweep_theta) for v in self.cfg.objective.variants]
        # Every variant is gated before the first simulation starts
        for obj in objectives:
            ensure_lq_assumptions(lti, cost, obj)

        seeds = [solver.seed + i for i in range(solver.seeds)]
        results = []
        for obj in objectives:
            variant = str(obj.variant)
            sol = integrate_dre(obj, lti, cost, solver.T, solver.dt)
            P_inf = solve_are(obj, lti, cost, tol=solver.are_tol, t_max=solver.are_t_max, dt=solver.dt)

            traj = run_dual_enkf(
                lti, cost, obj, solver.T, solver.dt, solver.N, solver.seed, enkf_options(self.cfg, SnapshotMode.STATS)
            )
            self.writer.write_table(
                f"{variant}_covariance",
                comparison_header(lti.d),
                comparison_rows(traj.time_grid, traj.covariances, sol.S),
            )

            errors = seed_sweep_errors(
                lti, cost, obj, solver.T, solver.dt, solver.N, seeds, sol.S[0], enkf_options(self.cfg), relative=True
            )
            stderr = float(errors.std(ddof=1) / np.sqrt(len(seeds))) if len(seeds) > 1 else 0.0
            results.append(
                VariantError(
                    variant=variant,
                    N=solver.N,
                    error=float(errors.mean()),
                    stderr=stderr,
                    seeds=len(seeds),
                    theta=obj.theta,
                    are_residual=are_residual(obj, lti, cost, P_inf),
                )
            )
            logger.info("smd_variant_complete", variant=variant, error=results[-1].error, stderr=stderr)

        summary = SmdSummary(results=results)
        self.writer.write_json("summary.json", summary)
        return summary

    def run_pendulum(self) -> PendulumSummary:
        """GA dual EnKF gains for every configured variant, then closed-loop rollouts from near upright"""
        cfg = self.cfg
        model, cost = make_pendulum_model(cfg.system.pendulum)
        linearized = model.linearize()

        baseline_batch = None
        if cfg.rollout.baseline:
            base_problem = Problem(model=model, cost=cost, obj=Objective.soc(), lti=linearized, linear=False)
            baseline_batch = self._rollouts(base_problem, ZeroPolicy(model.m))

        results = []
        for variant in cfg.objective.variants:
            obj = Objective.from_variant(Variant(variant), cfg.objective.sweep_theta)
            problem = Problem(model=model, cost=cost, obj=obj, lti=linearized, linear=False)
            label = str(obj.variant)

            traj = self._run_filter(problem, enkf_options(cfg, snapshots=SnapshotMode.STATS))
            schedule = self._schedule(problem, traj)
            self.writer.write_table(f"{label}_gains", schedule_header(schedule), schedule_rows(schedule))
            policy, oracle = self._policy(problem, schedule)

            batch = self._rollouts(problem, policy)
            self.writer.write_table(f"{label}_trajectories", rollout_header(batch), rollout_rows(batch))
            fraction = self._stabilized(problem, batch)
            controlled = self._rollout_summary(
                problem,
                cost_from_samples(batch.total_costs, obj),
                fraction,
                "model-free" if oracle is not None else "linear",
                oracle,
            )

            baseline = None
            if baseline_batch is not None:
                baseline = self._rollout_summary(
                    problem,
                    cost_from_samples(baseline_batch.total_costs, obj),
                    self._stabilized(problem, baseline_batch),
                    "zero",
                )

            results.append(
                PendulumVariantResult(
                    variant=label,
                    controlled=controlled,
                    baseline=baseline,
                    stabilized=fraction >= cfg.rollout.success_fraction,
                    gain=_matrix(schedule.gains[0]),
                )
            )
            logger.info("pendulum_variant_complete", variant=label, stabilized_fraction=fraction)

        if baseline_batch is not None:
            self.writer.write_table("baseline_trajectories", rollout_header(baseline_batch), rollout_rows(baseline_batch))
        summary = PendulumSummary(success_fraction=cfg.rollout.success_fraction, results=results)
        self.writer.write_json("summary.json", summary)
        return summary


def run_command(command: str, cfg: ExperimentConfig) -> BaseModel:
    return ExperimentRunner(cfg, command).run()


def run_experiment_smd(cfg: ExperimentConfig) -> SmdSummary:
    return ExperimentRunner(cfg, "smd").run()


def run_experiment_pendulum(cfg: ExperimentConfig) -> PendulumSummary:
    return ExperimentRunner(cfg, "pendulum").run()
