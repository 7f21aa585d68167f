"""Experiment-runner CLI: exit codes, report schema, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "georank.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


def write_config(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestDims:
    def test_reports_dimension_nine(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"problem": {"case": "psd", "p1": 5, "r": 2}})
        out = tmp_path / "report.json"
        proc = run_cli(["dims", "--config", str(cfg), "--out", str(out),
                        "--no-timestamp"], tmp_path)
        assert proc.returncode == 0, proc.stderr
        report = json.loads(out.read_text())
        assert report["schema"] == "georank-report/1"
        by_name = {c["name"]: c for c in report["checks"]}
        assert by_name["dims/psd_q1"]["details"]["count"] == 9
        assert report["passed"]


class TestVerifySandwich:
    def test_double_gram_margins_within_coefficients(self, tmp_path):
        cfg = write_config(
            tmp_path, "c.json",
            {
                "problem": {"case": "psd", "p1": 4, "r": 2},
                "metrics": {"psd_q1": ["double-gram"], "psd_q2": ["matched"]},
                "max_fosp_points": 2,
                "directions": 20,
                "seed": 5,
            },
        )
        out = tmp_path / "report.json"
        proc = run_cli(["verify-sandwich", "--config", str(cfg), "--out",
                        str(out), "--no-timestamp"], tmp_path)
        assert proc.returncode == 0, proc.stderr
        report = json.loads(out.read_text())
        assert report["passed"]
        for check in report["checks"]:
            det = check["details"]
            if det["metric"] == "double-gram":
                assert det["alpha"] == pytest.approx(1.0, rel=1e-9)
                assert det["beta"] == pytest.approx(2.0, rel=1e-9)
                for entry in det["per_index"]:
                    assert entry["ok"]


    def test_completion_problem_uses_solver_fosps(self, tmp_path):
        cfg = write_config(
            tmp_path, "c.json",
            {
                "problem": {"case": "psd", "kind": "completion", "p1": 4,
                            "r": 2, "mask_density": 0.9},
                "seed": 2,
                "max_fosp_points": 1,
                "directions": 10,
                "metrics": {"psd_q1": ["double-gram"], "psd_q2": ["polar"]},
            },
        )
        out = tmp_path / "report.json"
        proc = run_cli(["verify-sandwich", "--config", str(cfg), "--out",
                        str(out), "--no-timestamp"], tmp_path)
        assert proc.returncode == 0, proc.stderr
        report = json.loads(out.read_text())
        assert report["passed"]
        # stationary points came from the solver, not the analytic oracle
        assert all(c["details"]["grad_norm"] < 1e-8 for c in report["checks"])


class TestErrorPaths:
    def test_corrupted_csv_exits_2_no_report(self, tmp_path):
        bad = tmp_path / "m.csv"
        bad.write_text("1.0,2.0\nnot,numbers\n")
        cfg = write_config(
            tmp_path, "c.json",
            {"problem": {"case": "psd", "p1": 2, "r": 1,
                         "target_csv": str(bad)}},
        )
        out = tmp_path / "report.json"
        proc = run_cli(["dims", "--config", str(cfg), "--out", str(out)],
                       tmp_path)
        assert proc.returncode == 2
        assert not out.exists()
        assert "error" in proc.stderr

    def test_malformed_config_exits_2(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        proc = run_cli(["dims", "--config", str(cfg)], tmp_path)
        assert proc.returncode == 2

    def test_command_mismatch_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, "c.json", {"command": "classify"})
        proc = run_cli(["dims", "--config", str(cfg)], tmp_path)
        assert proc.returncode == 2

    def test_failed_check_exits_1_with_report(self, tmp_path):
        # an impossible tolerance forces a failing check
        cfg = write_config(
            tmp_path, "c.json",
            {
                "problem": {"case": "psd", "p1": 4, "r": 2},
                "trials": 1,
                "tolerances": {"grad_fd_rtol": 1e-30},
            },
        )
        out = tmp_path / "report.json"
        proc = run_cli(["check-gradients", "--config", str(cfg), "--out",
                        str(out), "--no-timestamp"], tmp_path)
        assert proc.returncode == 1
        report = json.loads(out.read_text())
        assert not report["passed"]


class TestOtherCommands:
    def test_check_gradients_passes(self, tmp_path):
        cfg = write_config(
            tmp_path, "c.json",
            {"problem": {"case": "general", "p1": 4, "p2": 3, "r": 2},
             "trials": 2, "seed": 7},
        )
        proc = run_cli(["check-gradients", "--config", str(cfg),
                        "--no-timestamp"], tmp_path)
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        names = {c["name"] for c in report["checks"]}
        assert "gradient-fd/gen_embedded" in names
        assert "gradient-fd/gen_q3/matched" in names

    def test_bijection_roundtrip_passes(self, tmp_path):
        cfg = write_config(
            tmp_path, "c.json",
            {"problem": {"case": "psd", "p1": 4, "r": 2},
             "trials": 1, "directions": 50, "seed": 2},
        )
        proc = run_cli(["bijection-roundtrip", "--config", str(cfg),
                        "--no-timestamp"], tmp_path)
        assert proc.returncode == 0, proc.stderr

    def test_classify_agreement(self, tmp_path):
        cfg = write_config(
            tmp_path, "c.json",
            {"problem": {"case": "psd", "p1": 4, "r": 1},
             "max_fosp_points": 3, "seed": 3},
        )
        proc = run_cli(["classify", "--config", str(cfg), "--no-timestamp"],
                       tmp_path)
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        assert all(c["details"]["agreement"] for c in report["checks"])

    def test_flow_compare_passes(self, tmp_path):
        cfg = write_config(
            tmp_path, "c.json",
            {"problem": {"case": "general", "p1": 4, "p2": 3, "r": 2},
             "flow": {"T": 0.5, "dt": 0.01}, "seed": 4},
        )
        proc = run_cli(["flow-compare", "--config", str(cfg),
                        "--no-timestamp"], tmp_path)
        assert proc.returncode == 0, proc.stderr

    def test_mask_csv_loaded(self, tmp_path):
        rng = np.random.default_rng(1)
        mask = (rng.random((4, 3)) < 0.8).astype(float)
        path = tmp_path / "mask.csv"
        np.savetxt(path, mask, delimiter=",")
        cfg = write_config(
            tmp_path, "c.json",
            {"problem": {"case": "general", "kind": "completion",
                         "p1": 4, "p2": 3, "r": 2, "mask_csv": str(path)}},
        )
        proc = run_cli(["dims", "--config", str(cfg), "--no-timestamp"],
                       tmp_path)
        assert proc.returncode == 0, proc.stderr

    def test_csv_target_loaded(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((4, 4))
        m = (m + m.T) / 2
        path = tmp_path / "m.csv"
        np.savetxt(path, m, delimiter=",")
        cfg = write_config(
            tmp_path, "c.json",
            {"problem": {"case": "psd", "p1": 4, "r": 2,
                         "target_csv": str(path)}},
        )
        proc = run_cli(["dims", "--config", str(cfg), "--no-timestamp"],
                       tmp_path)
        assert proc.returncode == 0, proc.stderr


class TestDeterminism:
    @pytest.mark.parametrize("command,extra", [
        ("dims", {}),
        ("verify-sandwich", {"max_fosp_points": 2, "directions": 10}),
    ])
    def test_byte_identical_reports(self, tmp_path, command, extra):
        cfg_dict = {"problem": {"case": "psd", "p1": 4, "r": 2}, "seed": 11}
        cfg_dict.update(extra)
        cfg = write_config(tmp_path, "c.json", cfg_dict)
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            proc = run_cli([command, "--config", str(cfg), "--out", str(out),
                            "--no-timestamp"], tmp_path)
            assert proc.returncode == 0, proc.stderr
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = write_config(
            tmp_path, "c.json",
            {"problem": {"case": "psd", "p1": 4, "r": 2}, "seed": 1},
        )
        out = tmp_path / "r.json"
        run_cli(["check-gradients", "--config", str(cfg), "--seed", "99",
                 "--out", str(out), "--no-timestamp"], tmp_path)
        report = json.loads(out.read_text())
        assert report["seed"] == 99
