import csv
import json
from pathlib import Path

import pytest

from adamsep.cli import ConfigValidationError, main, validate_config


def _write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _only_outdir(root: Path) -> Path:
    dirs = [p for p in root.iterdir() if p.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


def _tree_bytes(root: Path) -> dict:
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestValidation:
    def test_minimal_run_config_gets_defaults(self):
        cfg = validate_config({"command": "run"})
        assert cfg.resolved["problem"]["kind"] == "quadratic-diag"
        assert cfg.resolved["optimizer"]["beta1"] == 0.0
        assert cfg.resolved["run"]["T"] == 100

    def test_unknown_keys_rejected_not_ignored(self):
        with pytest.raises(ConfigValidationError) as exc:
            validate_config({"command": "run", "run": {"T": 10, "bogus": 1}, "nope": {}})
        text = " ".join(exc.value.violations)
        assert "run.bogus" in text and "nope" in text

    def test_beta2_conflicts_with_calibrated(self):
        with pytest.raises(ConfigValidationError) as exc:
            validate_config({"command": "run", "optimizer": {"calibrated": True, "beta2": 0.9}})
        assert any("beta2" in v for v in exc.value.violations)

    def test_negative_n_names_key(self):
        with pytest.raises(ConfigValidationError) as exc:
            validate_config({"command": "tail", "run": {"N": -3}})
        assert any("run.N" in v for v in exc.value.violations)

    def test_all_violations_reported(self):
        with pytest.raises(ConfigValidationError) as exc:
            validate_config({
                "command": "tail",
                "problem": {"kind": "nope"},
                "run": {"N": -3, "T": 0},
            })
        assert len(exc.value.violations) >= 3

    def test_missing_file_is_config_error(self, tmp_path):
        assert main(["--config", str(tmp_path / "absent.json")]) == 2


class TestRunCommand:
    def test_outputs_and_determinism(self, tmp_path):
        cfg = _write_config(tmp_path, {
            "command": "run",
            "problem": {"kind": "quadratic-diag", "d": 2, "lambda": [1.0, 2.0]},
            "oracle": {"noise": "gaussian", "sigma": 0.5},
            "optimizer": {"kind": "adam", "calibrated": True, "eta": 0.1, "beta1": 0.5},
            "run": {"T": 15, "master_seed": 7, "x_init": [1.0, -0.5]},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "a")]) == 0
        assert main(["--config", cfg, "--out", str(tmp_path / "b")]) == 0
        da, db = _only_outdir(tmp_path / "a"), _only_outdir(tmp_path / "b")
        assert da.name == db.name
        assert _tree_bytes(da) == _tree_bytes(db)
        with open(da / "steps.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:7] == ["t", "x_0", "x_1", "g_0", "g_1", "grad_0", "grad_1"]
        assert len(rows) == 16
        ledger = json.loads((da / "ledger.json").read_text())
        assert ledger["n_steps"] == 15 and ledger["w_gsq"] is None

    def test_divergence_exit_code(self, tmp_path):
        cfg = _write_config(tmp_path, {
            "command": "run",
            "oracle": {"noise": "zero"},
            "optimizer": {"kind": "sgd", "gamma": 3.0},
            "run": {"T": 10, "master_seed": 0, "x_init": [1e308]},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 3
        outdir = _only_outdir(tmp_path / "o")
        assert (outdir / "steps.csv").exists()

    def test_stopping_time_reported_when_G_configured(self, tmp_path):
        cfg = _write_config(tmp_path, {
            "command": "run",
            "oracle": {"noise": "zero"},
            "optimizer": {"kind": "sgd", "gamma": 0.25},
            "run": {"T": 5, "master_seed": 0, "x_init": [2.0], "G": 2.0},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0
        ledger = json.loads((_only_outdir(tmp_path / "o") / "ledger.json").read_text())
        assert ledger["tau_G"] == 1  # fbar(x_1) = 2 + 1 >= 2

    def test_sgd_steps_have_eta_column(self, tmp_path):
        cfg = _write_config(tmp_path, {
            "command": "run",
            "oracle": {"noise": "zero"},
            "optimizer": {"kind": "sgd", "gamma": 0.25},
            "run": {"T": 5, "master_seed": 0, "x_init": [1.0]},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0
        with open(_only_outdir(tmp_path / "o") / "steps.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "x_0", "g_0", "grad_0", "eta"]
        assert rows[1][-1] == "0.25"


class TestLemmasCommand:
    def test_clean_suite_exits_zero(self, tmp_path):
        cfg = _write_config(tmp_path, {
            "command": "lemmas",
            "run": {"count": 25, "master_seed": 12},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0
        outdir = _only_outdir(tmp_path / "o")
        with open(outdir / "violations.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["check_id", "seed", "d", "T", "beta1", "margin", "worst_t", "worst_i"]
        assert len(rows) == 1


class TestLowerboundCommand:
    def test_const_mode_all_verdicts(self, tmp_path):
        cfg = _write_config(tmp_path, {
            "command": "lowerbound",
            "optimizer": {"kind": "sgd", "gamma": 0.5},
            "run": {"mode": "const", "T": 100, "delta": 0.001, "x_init": 0.0,
                    "mc_runs": 2000, "master_seed": 5},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0
        report = json.loads((_only_outdir(tmp_path / "o") / "report.json").read_text())
        assert report["unweighted"]["all_hold"] and report["weighted"]["all_hold"]
        assert report["unweighted"]["mc_n"] == 2000

    def test_invalid_delta_exits_two_naming_clause(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, {
            "command": "lowerbound",
            "optimizer": {"kind": "sgd", "gamma": 0.5},
            "run": {"mode": "const", "T": 100, "delta": 0.5, "x_init": 0.0},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "delta_threshold" in capsys.readouterr().err

    def test_tv_mode(self, tmp_path):
        cfg = _write_config(tmp_path, {
            "command": "lowerbound",
            "optimizer": {"kind": "sgd", "gamma": 0.5},
            "run": {"mode": "tv", "T": 20, "delta_bar": 0.1, "master_seed": 1},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0
        report = json.loads((_only_outdir(tmp_path / "o") / "report.json").read_text())
        assert report["unweighted"]["all_hold"] and report["weighted"]["all_hold"]

    def test_tv_schedule_file(self, tmp_path):
        sched = tmp_path / "sched.csv"
        sched.write_text("eta\n" + "\n".join(["0.5"] * 20) + "\n")
        cfg = _write_config(tmp_path, {
            "command": "lowerbound",
            "optimizer": {"kind": "sgd", "schedule_path": str(sched)},
            "run": {"mode": "tv", "T": 20, "delta_bar": 0.1, "master_seed": 1},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0


class TestTailCommand:
    def test_per_delta_curve(self, tmp_path):
        cfg = _write_config(tmp_path, {
            "command": "tail",
            "oracle": {"noise": "three-point"},
            "optimizer": {"kind": "sgd", "gamma": 0.1},
            "run": {"T": 50, "N": 2000, "master_seed": 11, "per_delta": True,
                    "metric": "avg_gsq", "x_init": [0.0], "delta_grid": [0.1, 0.01, 0.001]},
        })
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 0
        outdir = _only_outdir(tmp_path / "o")
        with open(outdir / "curve.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["delta", "q", "n_exceed"]
        qs = [float(r[1]) for r in rows[1:]]
        assert qs == sorted(qs)
        fit = json.loads((outdir / "fit.json").read_text())
        assert "slope" in fit

    def test_workers_env_fallback(self, tmp_path, monkeypatch):
        payload = {
            "command": "run",
            "oracle": {"noise": "zero"},
            "optimizer": {"kind": "sgd", "gamma": 0.25},
            "run": {"T": 5, "master_seed": 0, "x_init": [1.0]},
        }
        cfg = _write_config(tmp_path, payload)
        monkeypatch.setenv("ADAMSEP_WORKERS", "2")
        assert main(["--config", cfg, "--out", str(tmp_path / "env")]) == 0
        monkeypatch.setenv("ADAMSEP_WORKERS", "eight")
        assert main(["--config", cfg, "--out", str(tmp_path / "bad")]) == 2

    def test_workers_do_not_change_bytes(self, tmp_path):
        payload = {
            "command": "tail",
            "oracle": {"noise": "gaussian", "sigma": 1.0},
            "optimizer": {"kind": "adam", "calibrated": True, "eta": 0.1},
            "run": {"T": 30, "N": 400, "master_seed": 2, "metric": "E",
                    "x_init": [1.0], "delta_grid": [0.2, 0.05, 0.01]},
        }
        cfg = _write_config(tmp_path, payload)
        assert main(["--config", cfg, "--out", str(tmp_path / "w1"), "--workers", "1"]) == 0
        assert main(["--config", cfg, "--out", str(tmp_path / "w2"), "--workers", "2"]) == 0
        assert _tree_bytes(_only_outdir(tmp_path / "w1")) == _tree_bytes(_only_outdir(tmp_path / "w2"))


class TestSeparateCommand:
    def test_small_scale_outputs(self, tmp_path):
        cfg = _write_config(tmp_path, {
            "command": "separate",
            "run": {"T": 100, "N": 2000, "master_seed": 5,
                    "delta_grid": [0.1, 0.0316, 0.01]},
        })
        code = main(["--config", cfg, "--out", str(tmp_path / "o")])
        assert code in (0, 1)  # gap criterion may not hold at toy scale
        outdir = _only_outdir(tmp_path / "o")
        report = json.loads((outdir / "separation.json").read_text())
        assert {"adam_fit", "sgd_fit", "slope_gap", "passes"} <= set(report)
        for name in ("sgd_curve.csv", "adam_curve.csv", "energy_curve.csv"):
            assert (outdir / name).exists()
        # determinism across invocations
        code2 = main(["--config", cfg, "--out", str(tmp_path / "o2")])
        assert code2 == code
        assert _tree_bytes(_only_outdir(tmp_path / "o"))
        assert _tree_bytes(_only_outdir(tmp_path / "o")) == _tree_bytes(_only_outdir(tmp_path / "o2"))
