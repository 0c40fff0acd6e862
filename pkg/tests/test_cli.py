"""CLI contract: exit codes, artifacts, and parity with library calls."""

import json

import numpy as np
import pytest

from spaf.cli import main
from spaf.instances import GeneratorSpec, build, dr_cycle_start, perturb_start
from spaf.problem import dump_problem, fingerprint
from spaf.solvers import SolverConfig, run_alternating_projections, trace_to_csv


def run_cli(args):
    return main([str(a) for a in args])


class TestExitCodes:
    def test_converged_solve_returns_zero(self, tmp_path, capsys):
        rc = run_cli(["solve", "--builtin", "hadamard7x8", "--alg", "ap",
                      "--perturb", 100, "--seed", 1, "--out", tmp_path])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["termination"] == "converged"
        assert summary["final_gap"] <= 1e-10

    def test_cycle_returns_two(self, tmp_path, capsys):
        x0_file = tmp_path / "x0.json"
        x0_file.write_text(json.dumps(list(dr_cycle_start())))
        rc = run_cli(["solve", "--builtin", "pathological", "--alg", "dr",
                      "--x0-file", x0_file, "--out", tmp_path / "run"])
        assert rc == 2
        summary = json.loads(capsys.readouterr().out)
        assert summary["termination"] == "cycle_detected"
        assert summary["cycle_period"] == 2

    def test_usage_errors_return_one(self, tmp_path):
        assert run_cli(["solve", "--alg", "ap"]) == 1
        assert run_cli(["solve", "--builtin", "hadamard7x8"]) == 1
        assert run_cli(["solve", "--builtin", "nope", "--alg", "ap"]) == 1
        assert run_cli(["solve", "--problem", tmp_path / "missing.json",
                        "--alg", "ap"]) == 1
        assert run_cli(["reproduce", "example_ninja"]) == 1
        assert run_cli(["diagnose", "--builtin", "hadamard7x8",
                        "--order", 99]) == 1
        assert run_cli(["--bogus"]) == 1

    def test_malformed_problem_file_returns_one(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"M": [[1, 2]], "p": [1], "s": 1, "extra": 0}')
        assert run_cli(["solve", "--problem", bad, "--alg", "ap",
                        "--out", tmp_path]) == 1

    def test_enumeration_cap_returns_three(self, tmp_path, capsys):
        rc = run_cli(["diagnose", "--builtin", "row_orthonormal", "--m", 8,
                      "--n", 32, "--s", 2, "--seed", 3, "--cap", 100,
                      "--out", tmp_path])
        assert rc == 3


class TestSolveArtifacts:
    def test_trace_matches_library_call(self, tmp_path, capsys):
        cli_dir = tmp_path / "cli"
        run_cli(["solve", "--builtin", "hadamard7x8", "--alg", "ap",
                 "--perturb", 100, "--seed", 5, "--out", cli_dir])
        prob = build(GeneratorSpec(kind="hadamard7x8"))
        # the perturbation stream is seeded one past the base seed
        start = perturb_start(prob, 100.0, seed=6).point
        trace = run_alternating_projections(prob, start, SolverConfig())
        lib_csv = tmp_path / "lib.csv"
        trace_to_csv(trace, lib_csv)
        assert (cli_dir / "trace.csv").read_bytes() == lib_csv.read_bytes()

    def test_manifest_contents(self, tmp_path, capsys):
        out = tmp_path / "run"
        run_cli(["solve", "--builtin", "hadamard7x8", "--alg", "pg",
                 "--seed", 2, "--out", out])
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest) == {"command_line", "resolved_config",
                                 "problem_fingerprint", "artifact_paths",
                                 "duration_seconds"}
        assert manifest["command_line"].startswith("spaf solve")
        assert manifest["resolved_config"]["algorithm"] == "pg"
        prob = build(GeneratorSpec(kind="hadamard7x8"))
        assert manifest["problem_fingerprint"] == fingerprint(prob)
        for name in manifest["artifact_paths"]:
            assert (out / name).exists()

    def test_identical_inputs_identical_fingerprints(self, tmp_path, capsys):
        args = ["solve", "--builtin", "gaussian", "--m", 4, "--n", 10,
                "--s", 2, "--seed", 9, "--alg", "ap"]
        run_cli(args + ["--out", tmp_path / "one"])
        run_cli(args + ["--out", tmp_path / "two"])
        get = lambda d: json.loads(
            (tmp_path / d / "manifest.json").read_text())["problem_fingerprint"]
        assert get("one") == get("two")

    def test_problem_file_round_trip(self, tmp_path, capsys):
        prob = build(GeneratorSpec(kind="gaussian", m=4, n=10, s=2, seed=1))
        pfile = tmp_path / "problem.json"
        pfile.write_text(dump_problem(prob))
        rc = run_cli(["solve", "--problem", pfile, "--alg", "ap",
                      "--perturb", 0.1, "--seed", 3, "--out", tmp_path / "o"])
        assert rc == 0

    def test_store_iterates_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "run"
        run_cli(["solve", "--builtin", "hadamard7x8", "--alg", "ap",
                 "--perturb", 1, "--seed", 4, "--store-iterates", "--out", out])
        summary = json.loads((out / "summary.json").read_text())
        lines = (out / "iterates.csv").read_text().strip().splitlines()
        assert lines[0].split(",")[:2] == ["k", "x0"]
        assert len(lines) == summary["iterations"] + 2  # header + x^0 .. x^K

    def test_summary_key_contract(self, tmp_path, capsys):
        out = tmp_path / "run"
        run_cli(["solve", "--builtin", "hadamard7x8", "--alg", "ap",
                 "--perturb", 1, "--seed", 4, "--out", out])
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary) == {"algorithm", "termination", "iterations",
                                "final_gap", "empirical_rate",
                                "ambiguity_count", "cycle_period"}


class TestDiagnose:
    def test_hadamard_report_and_rates(self, tmp_path, capsys):
        rc = run_cli(["diagnose", "--builtin", "hadamard7x8",
                      "--out", tmp_path])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        report = payload["report"]
        assert report["order"] == 2  # defaults to 2s
        assert abs(report["nu"] - 0.75) <= 1e-12
        assert abs(report["mu"] - 1.0) <= 1e-12
        assert report["strong_regularity"] is True
        assert payload["row_orthonormal"] is True
        rates = payload["rates"]
        assert abs(rates["ap_rate_rip"] - 1.0 / 3.0) <= 1e-12
        assert rates["ap_rate_rip_applicable"] is True
        on_disk = json.loads((tmp_path / "diagnostics.json").read_text())
        assert on_disk == payload

    def test_pathological_enumerates_three_supports(self, tmp_path, capsys):
        run_cli(["diagnose", "--builtin", "pathological", "--order", 2,
                 "--out", tmp_path])
        payload = json.loads(capsys.readouterr().out)
        assert payload["report"]["supports_enumerated"] == 3


class TestReproduce:
    def test_example_ninja_passes(self, tmp_path, capsys):
        out = tmp_path / "ninja"
        rc = run_cli(["reproduce", "example_ninja", "--seed", 0, "--out", out])
        assert rc == 0
        assert (out / "verdict.txt").read_text().splitlines()[0] == "PASS"
        assert (out / "manifest.json").exists()
        diag = json.loads((out / "diagnostics.json").read_text())
        assert abs(diag["report"]["nu"] - 0.75) <= 1e-12

    def test_example_cycle_passes(self, tmp_path, capsys):
        out = tmp_path / "cycle"
        rc = run_cli(["reproduce", "example_cycle", "--seed", 0, "--out", out])
        assert rc == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["verdict"] == "PASS"
        names = {c["name"] for c in summary["checks"]}
        assert "ap reports a period-2 cycle" in names
        assert all(c["passed"] for c in summary["checks"])
        for name in ("trace_ap.csv", "trace_dr.csv"):
            assert (out / name).exists()

    def test_fig_rip_b_passes_and_is_seeded(self, tmp_path, capsys):
        out = tmp_path / "rip_b"
        rc = run_cli(["reproduce", "fig_rip_b", "--seed", 11, "--out", out])
        assert rc == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["verdict"] == "PASS"
        assert len(summary["runs"]) == 10
        assert summary["runs"][0]["seed"] == 11
        assert (out / "trace_seed0.csv").exists()

    def test_fig_rip_c_shadow_checks(self, tmp_path, capsys):
        out = tmp_path / "rip_c"
        rc = run_cli(["reproduce", "fig_rip_c", "--seed", 3, "--out", out])
        assert rc == 0
        summary = json.loads((out / "summary.json").read_text())
        names = {c["name"] for c in summary["checks"]}
        assert "final iterates within 1e-8 of the fixed-point set" in names
        assert "some final iterate stays > 1e-2 from the intersection" in names

    def test_unknown_tag_rejected(self):
        assert run_cli(["reproduce", "fig_unknown", "--seed", 1]) == 1
