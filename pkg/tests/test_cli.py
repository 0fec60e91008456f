import csv
import json
import subprocess
import sys

import pytest

from tpa_yield.cli import EXIT_DATA, EXIT_IO, EXIT_NUMERIC, EXIT_OK, build_parser, main, resolve_config
from tpa_yield.schema import load_csv, synth_generate, write_csv


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    return write_csv(synth_generate(120, seed=3, noise_sd=1.0), tmp_path_factory.mktemp("data") / "d.csv")


def edited_csv(src, dst, edit):
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for i, row in enumerate(rows):
        edit(i, row)
    with open(dst, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return dst


def small_config(path):
    path.write_text(json.dumps({"folds": 3, "repeats": 1, "hidden_min": 2, "hidden_max": 3,
                                "mlp": {"max_iter": 30}, "hybrid": {"max_iter": 5}}))
    return str(path)


class TestValidate:
    def test_conformant(self, data_csv, tmp_path, capsys):
        assert main(["validate", str(data_csv), "--report", str(tmp_path / "v.json")]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report == json.loads((tmp_path / "v.json").read_text())
        assert report["violations"] == []

    def test_violations_listed(self, data_csv, tmp_path, capsys):
        def break_rows(i, row):
            if i == 4:
                row["temperature_C"] = "hot"
            if i == 9:
                row["tpa_yield_pct"] = "140"
        bad = edited_csv(data_csv, tmp_path / "bad.csv", break_rows)
        assert main(["validate", str(bad)]) == EXIT_DATA
        report = json.loads(capsys.readouterr().out)
        assert len(report["violations"]) >= 2

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "nope.csv")]) == EXIT_IO
        assert "error" in capsys.readouterr().err


class TestCommands:
    def test_synth(self, tmp_path, capsys):
        assert main(["--seed", "5", "--out-dir", str(tmp_path), "synth", "--n", "50", "--output", "s.csv"]) == EXIT_OK
        assert load_csv(tmp_path / "s.csv").n == 50
        assert (tmp_path / "s.csv").read_bytes() == write_csv(synth_generate(50, 5), tmp_path / "t.csv").read_bytes()

    def test_stats_deterministic(self, data_csv, tmp_path, capsys):
        assert main(["stats", str(data_csv), "--out-dir", str(tmp_path / "a")]) == EXIT_OK
        first = capsys.readouterr().out
        assert main(["stats", str(data_csv), "--out-dir", str(tmp_path / "b")]) == EXIT_OK
        assert capsys.readouterr().out == first
        ranking = json.loads((tmp_path / "a" / "ranking.json").read_text())["ranking"]
        assert sorted(r["rank"] for r in ranking) == list(range(1, 11))
        assert json.loads((tmp_path / "a" / "significance.json").read_text())["alpha"] == 0.05

    def test_split(self, data_csv, tmp_path, capsys):
        assert main(["split", str(data_csv), "--out-dir", str(tmp_path), "--folds", "4", "--repeats", "2"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("train=") == 8
        assert len(json.loads((tmp_path / "splits.json").read_text())["assignments"]) == 8

    def test_train_mlp_with_saved_plan(self, data_csv, tmp_path, capsys):
        main(["split", str(data_csv), "--out-dir", str(tmp_path)])
        capsys.readouterr()
        code = main(["train-mlp", str(data_csv), "--out-dir", str(tmp_path), "--splits", str(tmp_path / "splits.json"),
                     "--fold", "1", "--repeat", "2", "--hidden", "5"])
        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["split"] == "fold1-repeat2" and summary["hidden_size"] == 5
        assert set(summary["metrics"]) == {"train", "validation", "test"}
        assert (tmp_path / "mlp_model.json").is_file() and (tmp_path / "parity_mlp_test.csv").is_file()

    def test_train_anfis(self, data_csv, tmp_path, capsys):
        assert main(["train-anfis", str(data_csv), "--out-dir", str(tmp_path)]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["rules"] >= 1
        assert (tmp_path / "anfis_model.json").is_file()

    def test_unknown_triple(self, data_csv, tmp_path):
        assert main(["train-mlp", str(data_csv), "--out-dir", str(tmp_path), "--fold", "9"]) == EXIT_DATA

    def test_sweep(self, data_csv, tmp_path, capsys):
        cfg = small_config(tmp_path / "c.json")
        assert main(["sweep", str(data_csv), "--config", cfg, "--out-dir", str(tmp_path),
                     "--hidden-min", "2", "--hidden-max", "5"]) == EXIT_OK
        assert "best hidden size" in capsys.readouterr().out
        assert len((tmp_path / "sweep_curve.csv").read_text().splitlines()) == 1 + 4

    def test_run(self, data_csv, tmp_path, capsys):
        cfg = small_config(tmp_path / "c.json")
        assert main(["run", str(data_csv), "--config", cfg, "--out-dir", str(tmp_path / "o"), "--seed", "2"]) == EXIT_OK
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["config"]["seed"] == 2 and report["config"]["folds"] == 3
        assert "mlp: test R2" in capsys.readouterr().out


class TestExitCodes:
    def test_constant_column_is_numeric_failure(self, data_csv, tmp_path, capsys):
        def flatten(i, row):
            row["temperature_C"] = "150.0"
        flat = edited_csv(data_csv, tmp_path / "flat.csv", flatten)
        assert main(["train-mlp", str(flat), "--out-dir", str(tmp_path)]) == EXIT_NUMERIC
        err = capsys.readouterr().err
        assert "DegenerateFeature" in err

    def test_bad_config_key(self, data_csv, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"no_such_key": 1}))
        assert main(["stats", str(data_csv), "--config", str(path)]) == EXIT_DATA

    def test_config_not_json(self, data_csv, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{")
        assert main(["stats", str(data_csv), "--config", str(path)]) == EXIT_DATA

    def test_missing_config(self, data_csv, tmp_path):
        assert main(["stats", str(data_csv), "--config", str(tmp_path / "none.json")]) == EXIT_IO

    def test_invalid_value(self, data_csv, tmp_path):
        assert main(["split", str(data_csv), "--folds", "1", "--out-dir", str(tmp_path)]) == EXIT_DATA

    def test_stage_in_message(self, data_csv, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"folds": 500}))
        assert main(["run", str(data_csv), "--config", str(path), "--out-dir", str(tmp_path)]) == EXIT_DATA
        assert "error [split]" in capsys.readouterr().err

    def test_process_exit_code(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "tpa_yield.cli", "validate", str(tmp_path / "missing.csv")],
                              capture_output=True, text=True)
        assert proc.returncode == EXIT_IO


class TestConfigResolution:
    def test_flags_override_config(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 1, "folds": 3, "alpha": 0.01, "out_dir": "x"}))
        args = build_parser().parse_args(["--seed", "9", "stats", "d.csv", "--config", str(path), "--alpha", "0.1"])
        cfg = resolve_config(args)
        assert (cfg.seed, cfg.folds, cfg.alpha, cfg.out_dir, cfg.data) == (9, 3, 0.1, "x", "d.csv")

    def test_global_flags_after_subcommand(self):
        args = build_parser().parse_args(["synth", "--seed", "4", "--threads", "2"])
        cfg = resolve_config(args)
        assert (cfg.seed, cfg.threads) == (4, 2)

    def test_defaults(self):
        cfg = resolve_config(build_parser().parse_args(["run"]))
        assert (cfg.seed, cfg.folds, cfg.repeats, cfg.hidden_max, cfg.alpha) == (0, 5, 4, 25, 0.05)

    def test_every_subcommand_registered(self):
        parser = build_parser()
        for name in ("validate", "stats", "split", "train-mlp", "train-anfis", "sweep", "run", "synth"):
            argv = [name] if name in ("run", "synth") else [name, "d.csv"]
            assert parser.parse_args(argv).command == name
