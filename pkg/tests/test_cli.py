import json
import subprocess
import sys

import pytest

from semireg.cli import ExperimentConfig, main
from semireg.errors import ConfigError

TINY = {
    "task": "synthetic",
    "synthetic_n_samples": 120,
    "synthetic_input_dim": 1,
    "label_fraction": 0.2,
    "epochs": 2,
    "batch_labeled": 16,
    "batch_unlabeled": 16,
    "hidden_dims": [8],
    "ensemble_draws": 2,
    "seed": 0,
}


def write_config(tmp_path, overrides=None, name="config.json"):
    payload = dict(TINY)
    if overrides:
        payload.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


class TestConfigParsing:
    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="w_ulb"):
            ExperimentConfig.from_dict({"task": "synthetic", "w_ulb": 10})

    def test_invalid_value_names_field(self):
        with pytest.raises(ConfigError, match="unlabeled_weight"):
            ExperimentConfig.from_dict({"task": "synthetic", "unlabeled_weight": -1.0})

    def test_type_errors_name_field(self):
        with pytest.raises(ConfigError, match="epochs"):
            ExperimentConfig.from_dict({"task": "synthetic", "epochs": "many"})
        with pytest.raises(ConfigError, match="hidden_dims"):
            ExperimentConfig.from_dict({"task": "synthetic", "hidden_dims": [8.5]})

    def test_csv_task_requires_csv_keys(self):
        with pytest.raises(ConfigError, match="csv_path"):
            ExperimentConfig.from_dict({"task": "csv"})

    def test_defaults_are_materialized_into_the_hash(self):
        c1 = ExperimentConfig.from_dict({"task": "synthetic"})
        c2 = ExperimentConfig.from_dict({"task": "synthetic", "epochs": 150})
        assert c1.sha256() == c2.sha256()  # 150 is the default
        assert c1.with_seed(1).sha256() != c1.sha256()

    def test_missing_file_and_bad_json(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            ExperimentConfig.from_file(tmp_path / "nope.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            ExperimentConfig.from_file(bad)


class TestTrainCommand:
    def test_happy_path_writes_all_artifacts(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["train", "--config", str(config), "--out", str(out)]) == 0
        for artifact in (
            "metrics.json",
            "loss_history.csv",
            "bin_report.csv",
            "model_a.json",
            "model_b.json",
        ):
            assert (out / artifact).exists(), artifact
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["seed"] == 0
        assert len(metrics["config_sha256"]) == 64
        assert metrics["n_steps"] > 0

    def test_rerun_is_byte_identical(self, tmp_path):
        config = write_config(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["train", "--config", str(config), "--out", str(out1)]) == 0
        assert main(["train", "--config", str(config), "--out", str(out2)]) == 0
        for name in ("metrics.json", "loss_history.csv", "bin_report.csv", "model_a.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_invalid_config_exits_nonzero_naming_field(self, tmp_path, capsys):
        config = write_config(tmp_path, {"unlabeled_weight": -1.0})
        assert main(["train", "--config", str(config), "--out", str(tmp_path / "x")]) == 2
        assert "unlabeled_weight" in capsys.readouterr().err

    def test_seed_flag_overrides_config(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "seeded"
        assert main(["train", "--config", str(config), "--seed", "7", "--out", str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["seed"] == 7

    def test_loss_history_has_provenance_and_rows(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "hist"
        main(["train", "--config", str(config), "--out", str(out)])
        lines = (out / "loss_history.csv").read_text().strip().split("\n")
        assert lines[0].startswith("# config_sha256=")
        assert lines[1].split(",")[:3] == ["step", "labeled_reg", "labeled_unc"]
        metrics = json.loads((out / "metrics.json").read_text())
        assert len(lines) - 2 == metrics["n_steps"]


class TestAblateCommand:
    def test_zero_epochs_gives_four_identical_rows(self, tmp_path):
        config = write_config(tmp_path, {"epochs": 0, "seeds": [0]})
        out = tmp_path / "ablate"
        assert main(["ablate", "--config", str(config), "--out", str(out)]) == 0
        lines = (out / "ablation_table.csv").read_text().strip().split("\n")
        data_rows = [l for l in lines if not l.startswith("#")][1:]
        assert len(data_rows) == 4
        maes = {row.split(",")[1] for row in data_rows}
        assert len(maes) == 1  # untrained metrics identical across variants

    def test_table_parses_as_csv_with_four_data_rows(self, tmp_path):
        import csv as csv_mod

        config = write_config(tmp_path, {"epochs": 1, "seeds": [0, 1]})
        out = tmp_path / "ablate2"
        assert main(["ablate", "--config", str(config), "--out", str(out)]) == 0
        with open(out / "ablation_table.csv") as fh:
            rows = [r for r in csv_mod.reader(fh) if not r[0].startswith("#")]
        assert rows[0] == ["variant", "mae_mean", "mae_std", "r2_mean", "r2_std", "n_seeds", "n_failed"]
        assert len(rows) == 5
        assert [r[0] for r in rows[1:]] == ["baseline", "baseline_con", "baseline_ens", "full"]
        assert all(r[6] == "0" for r in rows[1:])
        cells = json.loads((out / "ablation_cells.json").read_text())
        assert len(cells["cells"]) == 8  # 4 variants x 2 seeds


class TestVarianceDemoCommand:
    def test_report_schema_and_zero_dropout_equality(self, tmp_path):
        config = write_config(tmp_path, {"dropout_p": 0.0, "variance_reruns": 30, "epochs": 1})
        out = tmp_path / "vd"
        assert main(["variance-demo", "--config", str(config), "--out", str(out)]) == 0
        payload = json.loads((out / "variance_report.json").read_text())
        assert payload["reruns"] == 30
        assert [row["t_draws"] for row in payload["rows"]] == [1, 2, 5, 20]
        for row in payload["rows"]:
            for field in (
                "t_draws",
                "reruns",
                "mse_single",
                "mse_ensemble",
                "bias_single",
                "bias_ensemble",
                "var_single",
                "var_ensemble",
            ):
                assert field in row
            assert row["mse_single"] == pytest.approx(row["mse_ensemble"], rel=1e-12)

    def test_dropout_makes_ensemble_help(self, tmp_path):
        config = write_config(
            tmp_path, {"dropout_p": 0.25, "variance_reruns": 60, "epochs": 2}
        )
        out = tmp_path / "vd2"
        assert main(["variance-demo", "--config", str(config), "--out", str(out)]) == 0
        payload = json.loads((out / "variance_report.json").read_text())
        for row in payload["rows"]:
            if row["t_draws"] == 1:
                continue
            assert row["mse_ensemble"] <= row["mse_single"] + 2 * row["mse_gap_se"]


class TestEvaluateCommand:
    def test_checkpoint_evaluation_matches_training_metrics(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "trained"
        assert main(["train", "--config", str(config), "--out", str(out)]) == 0
        assert main(["evaluate", "--config", str(config), "--out", str(out)]) == 0
        train_metrics = json.loads((out / "metrics.json").read_text())
        eval_metrics = json.loads((out / "eval_metrics.json").read_text())
        assert eval_metrics["test_mae"] == train_metrics["test_mae"]
        assert eval_metrics["test_r2"] == train_metrics["test_r2"]


def test_module_entrypoint_runs(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "proc"
    proc = subprocess.run(
        [sys.executable, "-m", "semireg.cli", "train", "--config", str(config), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "test_mae=" in proc.stdout
