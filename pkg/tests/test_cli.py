"""CLI tests: the full file-based loop against the checked-in fast scenario,
exit codes, and artifact determinism."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from weldwatch.cli import cli_run

REPO = Path(__file__).resolve().parent.parent
FAST_CONFIG = str(REPO / "scenarios" / "fast.ini")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """simulate -> train -> fit-detector, shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    run = root / "run"
    assert cli_run(["simulate", "--config", FAST_CONFIG, "--seed", "3", "--out", str(run)]) == 0
    assert (
        cli_run(
            [
                "train",
                "--config",
                FAST_CONFIG,
                "--seed",
                "3",
                "--data",
                str(run / "dataset.csv"),
                "--out",
                str(run),
            ]
        )
        == 0
    )
    assert (
        cli_run(
            [
                "fit-detector",
                "--config",
                FAST_CONFIG,
                "--model",
                str(run / "model.json"),
                "--data",
                str(run / "train_known.csv"),
                "--out",
                str(run),
            ]
        )
        == 0
    )
    return run


class TestPipelineCommands:
    def test_simulate_artifacts(self, workspace):
        rows = (workspace / "dataset.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 6 * 18  # header + 6 classes x 18

    def test_train_artifacts(self, workspace):
        assert (workspace / "model.json").exists()
        assert (workspace / "train_known.csv").exists()
        assert (workspace / "test_known.csv").exists()
        assert (workspace / "withheld.csv").exists()
        with (workspace / "loss_history.csv").open() as fh:
            losses = list(csv.DictReader(fh))
        assert len(losses) == 80
        assert float(losses[-1]["mean_loss"]) < float(losses[0]["mean_loss"])

    def test_detect_on_withheld(self, workspace, tmp_path):
        out = tmp_path / "det"
        code = cli_run(
            [
                "detect",
                "--run",
                str(workspace),
                "--data",
                str(workspace / "withheld.csv"),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        with (out / "decisions.csv").open() as fh:
            decisions = list(csv.DictReader(fh))
        assert decisions
        flagged = [d for d in decisions if d["outcome"] == "unknown"]
        assert len(flagged) >= 0.8 * len(decisions)
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["unknown_recall"] >= 0.8

    def test_eval_metrics(self, workspace, tmp_path):
        out = tmp_path / "ev"
        code = cli_run(
            [
                "eval",
                "--run",
                str(workspace),
                "--data",
                str(workspace / "test_known.csv"),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["n_unknown"] == 0
        assert metrics["known_accuracy"] >= 0.8

    def test_cluster_file_mode(self, workspace, tmp_path):
        out = tmp_path / "cl"
        code = cli_run(
            [
                "cluster",
                "--config",
                FAST_CONFIG,
                "--run",
                str(workspace),
                "--data",
                str(workspace / "withheld.csv"),
                "--known",
                str(workspace / "train_known.csv"),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        with (out / "clusters.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert {r["sample_id"] for r in rows} == {
            f"damaged_clean-{i:03d}" for i in range(18)
        } | {f"damaged_contaminated-{i:03d}" for i in range(18)}
        assert set(rows[0]) == {
            "sample_id",
            "cluster_id",
            "distance_to_centroid",
            "is_representative",
        }

    def test_update_with_new_class(self, workspace, tmp_path):
        shots_csv = tmp_path / "shots.csv"
        with (workspace / "withheld.csv").open() as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], [r for r in rows[1:] if r[0].startswith("damaged_clean")]
        with shots_csv.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in body[:6]:
                writer.writerow(r[:-1] + [""])  # unlabeled shots
        out = tmp_path / "upd"
        code = cli_run(
            [
                "update",
                "--config",
                FAST_CONFIG,
                "--run",
                str(workspace),
                "--new-class",
                f"damaged_tool={shots_csv}",
                "--seed",
                "4",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        bank = json.loads((out / "bank.json").read_text())
        assert "damaged_tool" in bank["class_labels"]
        model = json.loads((out / "model.json").read_text())
        assert model["layer_sizes"][-1] == 5

    def test_sweep_small_grid(self, workspace, tmp_path):
        out = tmp_path / "sw"
        code = cli_run(
            [
                "sweep",
                "--config",
                FAST_CONFIG,
                "--run",
                str(workspace),
                "--classes",
                "1..2",
                "--shots",
                "2,4",
                "--repeats",
                "2",
                "--seed",
                "6",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        with (out / "sweep_trials.csv").open() as fh:
            trials = list(csv.DictReader(fh))
        assert len(trials) == 2 * 2 * 2
        with (out / "sweep_summary.csv").open() as fh:
            summary = list(csv.DictReader(fh))
        assert len(summary) == 4

    def test_detect_into_state_dir(self, workspace, tmp_path):
        out = tmp_path / "det2"
        state = tmp_path / "state"
        code = cli_run(
            [
                "detect",
                "--run",
                str(workspace),
                "--data",
                str(workspace / "withheld.csv"),
                "--state-dir",
                str(state),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert (state / "CURRENT").read_text().strip() == "2"


class TestDeterminism:
    def test_train_twice_identical_model_files(self, tmp_path):
        runs = []
        for name in ("a", "b"):
            run = tmp_path / name
            assert cli_run(["simulate", "--config", FAST_CONFIG, "--seed", "9", "--out", str(run)]) == 0
            assert (
                cli_run(
                    [
                        "train",
                        "--config",
                        FAST_CONFIG,
                        "--seed",
                        "9",
                        "--data",
                        str(run / "dataset.csv"),
                        "--out",
                        str(run),
                    ]
                )
                == 0
            )
            runs.append((run / "model.json").read_text())
        assert runs[0] == runs[1]


class TestExitCodes:
    def test_unknown_flag_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli_run(["train", "--nonsense"])
        assert exc.value.code == 2

    def test_unknown_command_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli_run(["explode"])
        assert exc.value.code == 2

    def test_missing_file_exit_one(self, tmp_path, capsys):
        code = cli_run(
            [
                "fit-detector",
                "--model",
                str(tmp_path / "absent.json"),
                "--data",
                str(tmp_path / "absent.csv"),
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert code == 1
        assert "weldwatch fit-detector" in capsys.readouterr().err

    def test_bad_config_value_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[scenario]\nknown = a\ncovariance_scale = -1\n")
        code = cli_run(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")])
        assert code == 1
        assert capsys.readouterr().err
