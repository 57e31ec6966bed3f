"""End-to-end runs through the command-line entry point."""

import json

import pytest

from app.cli.routes import build_parser, main, resolve_config
from app.core.exceptions import DivergenceError

SMALL_ENKF = ["--system", "smd", "-N", "50", "-T", "0.5", "--dt", "0.01"]
DATA_FILES = ["enkf.csv", "gains.csv", "summary.json"]


def load(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["--version"])
    assert info.value.code == 0
    assert "dual-enkf" in capsys.readouterr().out


def test_unknown_flag_exits_with_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["enkf", "--particles", "10"])
    assert info.value.code == 2


class TestRiccati:
    def test_scalar(self, tmp_path):
        assert main(["riccati", "--system", "scalar", "-T", "1", "--dt", "0.1", "--output", str(tmp_path)]) == 0
        out = tmp_path / "riccati"
        assert {p.name for p in out.iterdir()} == {"manifest.json", "riccati.csv", "summary.json"}
        summary = load(out / "summary.json")
        assert summary["variant"] == "LQG"
        assert summary["P0"] == [[pytest.approx(1.0)]]
        assert summary["g0"] == pytest.approx(1.0)
        assert summary["are_solution"] == [[pytest.approx(1.0)]]

    def test_risk_sensitive_flags(self, tmp_path):
        argv = ["riccati", "--objective", "rsc", "--theta", "-1", "-T", "1", "--dt", "0.01", "--output", str(tmp_path)]
        assert main(argv) == 0
        summary = load(tmp_path / "riccati" / "summary.json")
        assert summary["variant"] == "LEQGN"
        assert summary["theta"] == -1.0

    def test_assumption_violation_exit_code(self, tmp_path):
        argv = ["riccati", "--system", "scalar", "--objective", "rsc", "--theta", "2", "--output", str(tmp_path)]
        assert main(argv) == 2


class TestEnkf:
    def test_outputs(self, tmp_path):
        assert main(["enkf", *SMALL_ENKF, "--output", str(tmp_path)]) == 0
        out = tmp_path / "enkf"
        for name in DATA_FILES + ["manifest.json"]:
            assert (out / name).is_file()
        summary = load(out / "summary.json")
        assert summary["N"] == 50
        assert summary["relative_error"] is not None
        assert len(summary["S0"]) == 2
        assert (out / "enkf.csv").read_text().splitlines()[0] == "t,n_0,n_1,S_00,S_01,S_10,S_11"

    def test_full_snapshots(self, tmp_path):
        assert main(["enkf", *SMALL_ENKF, "--snapshots", "full", "--output", str(tmp_path)]) == 0
        lines = (tmp_path / "enkf" / "particles.csv").read_text().splitlines()
        assert lines[0] == "t,particle,y_0,y_1"
        assert len(lines) == 1 + 51 * 50

    def test_single_particle_rejected(self, tmp_path):
        assert main(["enkf", "-N", "1", "--output", str(tmp_path)]) == 2

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text("[solver]\nparticles = 10\n", encoding="utf-8")
        assert main(["enkf", "--config", str(config), "--output", str(tmp_path)]) == 2

    def test_numerical_failure_exit_code(self, tmp_path, mocker):
        mocker.patch(
            "app.orchestrator.experiment_runner.run_dual_enkf",
            side_effect=DivergenceError(7, 0.43),
        )
        assert main(["enkf", *SMALL_ENKF, "--output", str(tmp_path)]) == 3
        # the manifest is written before the failing step
        assert (tmp_path / "enkf" / "manifest.json").is_file()

    def test_reruns_are_byte_identical(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(["enkf", *SMALL_ENKF, "--seed", "3", "--output", str(first)]) == 0
        assert main(["enkf", *SMALL_ENKF, "--seed", "3", "--output", str(second)]) == 0
        for name in DATA_FILES:
            assert (first / "enkf" / name).read_bytes() == (second / "enkf" / name).read_bytes()

    def test_manifest_rerun(self, tmp_path):
        first, replay = tmp_path / "a", tmp_path / "replay"
        assert main(["enkf", *SMALL_ENKF, "--seed", "5", "--output", str(first)]) == 0
        manifest = first / "enkf" / "manifest.json"
        assert main(["enkf", "--manifest", str(manifest), "--output", str(replay)]) == 0
        for name in DATA_FILES:
            assert (first / "enkf" / name).read_bytes() == (replay / "enkf" / name).read_bytes()
        assert load(replay / "enkf" / "manifest.json")["build_id"] == load(manifest)["build_id"]

    def test_manifest_for_other_command(self, tmp_path):
        assert main(["enkf", *SMALL_ENKF, "--output", str(tmp_path)]) == 0
        manifest = tmp_path / "enkf" / "manifest.json"
        assert main(["riccati", "--manifest", str(manifest)]) == 2


def test_ga_enkf_pendulum(tmp_path):
    argv = ["ga-enkf", "-N", "30", "-T", "0.3", "--dt", "0.01", "--output", str(tmp_path)]
    assert main(argv) == 0
    summary = load(tmp_path / "ga-enkf" / "summary.json")
    assert summary["coordinates"] == "error"
    assert len(summary["S0"]) == 4
    assert summary["reference_S0"] is not None


def test_ga_enkf_skips_reference_when_linearization_fails(tmp_path):
    argv = ["ga-enkf", "--objective", "rsc", "--theta", "0.5", "-N", "30", "-T", "0.3", "--dt", "0.01",
            "--output", str(tmp_path)]
    assert main(argv) == 0
    summary = load(tmp_path / "ga-enkf" / "summary.json")
    assert summary["reference_S0"] is None
    assert summary["error"] is None


class TestRollout:
    BASE = ["rollout", "--system", "scalar", "-N", "50", "-T", "1", "--dt", "0.01",
            "-M", "5", "--t-sim", "1", "--dt-sim", "0.01"]

    def test_linear_policy(self, tmp_path):
        assert main([*self.BASE, "--output", str(tmp_path)]) == 0
        summary = load(tmp_path / "rollout" / "summary.json")
        assert summary["M"] == 5
        assert summary["policy"] == "linear"
        assert summary["oracle_queries"] is None
        lines = (tmp_path / "rollout" / "trajectories.csv").read_text().splitlines()
        assert lines[0] == "rollout,t,x_0,u_0"
        assert len(lines) == 1 + 5 * 101

    def test_model_free_policy(self, tmp_path):
        assert main([*self.BASE, "--model-free", "--n-samples", "10", "--output", str(tmp_path)]) == 0
        summary = load(tmp_path / "rollout" / "summary.json")
        assert summary["policy"] == "model-free"
        # m + 1 queries per rollout per step
        assert summary["oracle_queries"] == 5 * 100 * 2

    def test_model_free_matches_linear_cost(self, tmp_path):
        assert main([*self.BASE, "--output", str(tmp_path / "lin")]) == 0
        assert main([*self.BASE, "--model-free", "--output", str(tmp_path / "mf")]) == 0
        linear = load(tmp_path / "lin" / "rollout" / "summary.json")
        model_free = load(tmp_path / "mf" / "rollout" / "summary.json")
        assert model_free["value"] == pytest.approx(linear["value"], rel=1e-6)


class TestDiagnose:
    def test_poisson_passes(self, tmp_path):
        assert main(["diagnose", "--check", "poisson", "--output", str(tmp_path)]) == 0
        report = load(tmp_path / "diagnose" / "report.json")
        assert report["passed"] is True
        assert set(report["values"]) == {"LQG", "LEQGP", "LEQGN"}

    def test_poisson_detects_wrong_field(self, tmp_path):
        argv = ["diagnose", "--check", "poisson", "--field-scale", "1.1", "--output", str(tmp_path)]
        assert main(argv) == 0
        assert load(tmp_path / "diagnose" / "report.json")["passed"] is False

    def test_dual(self, tmp_path):
        argv = ["diagnose", "--check", "dual", "-T", "2", "--dt", "0.001", "--output", str(tmp_path)]
        assert main(argv) == 0
        report = load(tmp_path / "diagnose" / "report.json")
        assert report["passed"] is True
        assert report["values"]["dual_consistency"] < 1e-6

    def test_convergence(self, tmp_path):
        argv = ["diagnose", "--check", "convergence", "--system", "scalar", "-T", "0.5", "--dt", "0.05",
                "--Ns", "10", "1000", "--seeds", "5", "--output", str(tmp_path)]
        assert main(argv) == 0
        assert load(tmp_path / "diagnose" / "report.json")["passed"] is True
        lines = (tmp_path / "diagnose" / "convergence.csv").read_text().splitlines()
        assert lines[0] == "N,mean_error,std,std_error,seeds"
        assert len(lines) == 3


def test_smd_experiment_json(tmp_path):
    argv = ["smd", "-N", "20", "-T", "0.2", "--dt", "0.01", "--seeds", "2", "--format", "json", "--output", str(tmp_path)]
    assert main(argv) == 0
    out = tmp_path / "smd"
    summary = load(out / "summary.json")
    assert [r["variant"] for r in summary["results"]] == ["LQG", "LEQGP", "LEQGN"]
    for result in summary["results"]:
        assert set(result) == {"variant", "N", "error", "stderr", "seeds", "theta", "are_residual"}
        assert result["seeds"] == 2
    records = load(out / "LQG_covariance.json")
    assert len(records) == 21
    assert set(records[0]) == {"t", "S_enkf_00", "S_enkf_01", "S_enkf_10", "S_enkf_11",
                               "S_dre_00", "S_dre_01", "S_dre_10", "S_dre_11"}


def test_pendulum_defaults():
    cfg = resolve_config(build_parser().parse_args(["pendulum"]))
    assert cfg.solver.N == 10000
    assert cfg.solver.T == 10.0
    assert cfg.policy.stationary_window == 5.0
    overridden = resolve_config(build_parser().parse_args(["pendulum", "-N", "200", "-T", "2"]))
    assert overridden.solver.N == 200
    assert overridden.solver.T == 2.0
    assert overridden.policy.stationary_window == 5.0


def test_pendulum_experiment_small(tmp_path):
    config = tmp_path / "short.toml"
    config.write_text("[rollout]\nT = 0.5\n", encoding="utf-8")
    argv = ["pendulum", "--config", str(config), "-N", "30", "-T", "0.5", "--dt", "0.01", "-M", "4",
            "--variants", "LQG", "--output", str(tmp_path)]
    assert main(argv) == 0
    out = tmp_path / "pendulum"
    summary = load(out / "summary.json")
    assert len(summary["results"]) == 1
    result = summary["results"][0]
    assert result["variant"] == "LQG"
    assert 0.0 <= result["controlled"]["stabilized_fraction"] <= 1.0
    assert result["baseline"]["policy"] == "zero"
    assert len(result["gain"][0]) == 4
    for name in ["LQG_gains.csv", "LQG_trajectories.csv", "baseline_trajectories.csv"]:
        assert (out / name).is_file()


@pytest.mark.slow
def test_pendulum_experiment_stabilizes(tmp_path):
    assert main(["pendulum", "--output", str(tmp_path)]) == 0
    summary = load(tmp_path / "pendulum" / "summary.json")
    for result in summary["results"]:
        assert result["controlled"]["stabilized_fraction"] >= 0.8
        assert result["baseline"]["stabilized_fraction"] < 0.8
