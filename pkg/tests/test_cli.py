import json
from pathlib import Path

import numpy as np
import pytest

from morphguard import metrics
from morphguard.cli import main
from morphguard.datagen import load_dataset
from morphguard.encoder import load_checkpoint
from morphguard.experiment import ExperimentConfig
from morphguard.losses import SampleKind

SMALL = {
    "seed": 9,
    "data": {"num_classes": 6, "samples_per_class": 10, "input_dim": 16, "spread": 0.15},
    "model": {"hidden_dims": [16], "embedding_dim": 8},
    "train": {"epochs": 2, "lr_start": 2e-2, "lr_end": 1e-3, "batch_size": 32},
    "margin": {"scale": 16.0},
    "sweep_grid": [0.0, -0.1],
    "eval": {"genuine_pairs": 200, "impostor_pairs": 200},
    "adapt": {"stage1_epochs": 2, "stage2_epochs": 2},
}


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory, config_path):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--config", config_path, "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory, config_path):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", "--config", config_path, "--out", str(out)]) == 0
    return out


class TestPrintDefaultConfig:
    def test_output_parses_to_default(self, capsys):
        assert main(["print-default-config"]) == 0
        raw = json.loads(capsys.readouterr().out)
        assert ExperimentConfig.from_dict(raw) == ExperimentConfig()


class TestGenData:
    def test_files_and_manifest(self, data_dir, config_path):
        for name in ("bona_fides.jsonl", "dataset.jsonl", "protocol.json", "manifest.json"):
            assert (data_dir / name).exists()
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert manifest["command"] == "gen-data"
        assert ExperimentConfig.from_dict(manifest["config"]) == ExperimentConfig.from_dict(SMALL)

    def test_morph_count_matches_ratios(self, data_dir):
        dataset = load_dataset(data_dir / "dataset.jsonl")
        kinds = [s.labels.kind for s in dataset]
        n_bona = kinds.count(SampleKind.BONA_FIDE)
        assert kinds.count(SampleKind.MORPH) == n_bona // 2
        assert kinds.count(SampleKind.SELF_MORPH) == n_bona // 2

    def test_rerun_byte_identical(self, data_dir, config_path, tmp_path):
        again = tmp_path / "again"
        assert main(["gen-data", "--config", config_path, "--out", str(again)]) == 0
        assert tree_bytes(data_dir) == tree_bytes(again)

    def test_seed_override_changes_output(self, data_dir, config_path, tmp_path):
        other = tmp_path / "other"
        assert main(["gen-data", "--config", config_path, "--seed", "123", "--out", str(other)]) == 0
        assert tree_bytes(data_dir) != tree_bytes(other)


class TestTrain:
    def test_checkpoint_and_history(self, train_dir):
        model = load_checkpoint(train_dir / "checkpoint.bin")
        assert model.num_classes == 6
        lines = (train_dir / "history.csv").read_text().strip().splitlines()
        assert lines[0] == "stage,epoch,mean_loss,lr"
        assert len(lines) == 1 + SMALL["train"]["epochs"]

    def test_rerun_byte_identical(self, train_dir, config_path, tmp_path):
        again = tmp_path / "again"
        assert main(["train", "--config", config_path, "--out", str(again)]) == 0
        assert (train_dir / "checkpoint.bin").read_bytes() == (again / "checkpoint.bin").read_bytes()
        assert (train_dir / "history.csv").read_bytes() == (again / "history.csv").read_bytes()


@pytest.fixture(scope="module")
def eval_dir(tmp_path_factory, config_path, data_dir, train_dir):
    out = tmp_path_factory.mktemp("eval")
    code = main(
        [
            "eval",
            "--config",
            config_path,
            "--out",
            str(out),
            "--checkpoint",
            str(train_dir / "checkpoint.bin"),
            "--data",
            str(data_dir / "bona_fides.jsonl"),
            "--protocol",
            str(data_dir / "protocol.json"),
        ]
    )
    assert code == 0
    return out


class TestEval:
    def test_emits_reports(self, eval_dir):
        for name in ("fnmr.csv", "fmr.csv", "mmpmr.csv", "operating_points.csv", "scores.csv", "trials.json"):
            assert (eval_dir / name).exists()

    def test_sentinel_rows(self, eval_dir):
        fnmr = metrics.load_curve_csv(eval_dir / "fnmr.csv")
        assert fnmr.thresholds[0] == -1.0
        assert fnmr.values[0] == 0.0  # no genuine score reaches -1
        assert fnmr.values[-1] == 1.0

    def test_csv_values_rederivable_from_api(self, eval_dir):
        # dual path: everything in the CSVs must equal fresh API calls on
        # the emitted scores and trials
        scores = metrics.load_scores_csv(eval_dir / "scores.csv")
        trials = metrics.load_trials_json(eval_dir / "trials.json")
        fnmr, fmr = metrics.fnmr_fmr_curves(scores)
        disk_fnmr = metrics.load_curve_csv(eval_dir / "fnmr.csv")
        np.testing.assert_array_equal(disk_fnmr.thresholds, fnmr.thresholds)
        np.testing.assert_array_equal(disk_fnmr.values, fnmr.values)
        disk_points = metrics.load_operating_points_csv(eval_dir / "operating_points.csv")
        fresh = metrics.mmpmr_at_fnmr(trials, scores, [0.01, 0.001])
        fresh += metrics.fnmr_at_fmr(scores, [0.001, 0.0001])
        tau, value = metrics.min_rmmr(trials, scores)
        assert disk_points[: len(fresh)] == fresh
        min_row = disk_points[len(fresh)]
        assert (min_row.threshold, min_row.value) == (tau, value)

    def test_trial_count_matches_protocol(self, eval_dir, data_dir):
        trials = metrics.load_trials_json(eval_dir / "trials.json")
        protocol = json.loads((data_dir / "protocol.json").read_text())
        assert len(trials) == len(protocol)

    def test_dimension_mismatch_exit_code(self, config_path, data_dir, train_dir, tmp_path):
        bad = tmp_path / "bad.jsonl"
        lines = (data_dir / "bona_fides.jsonl").read_text().strip().splitlines()
        record = json.loads(lines[0])
        record["input"] = record["input"][:-2]
        bad.write_text("\n".join([json.dumps(record)] + lines[1:]))
        code = main(
            [
                "eval",
                "--config",
                config_path,
                "--out",
                str(tmp_path / "out"),
                "--checkpoint",
                str(train_dir / "checkpoint.bin"),
                "--data",
                str(bad),
                "--protocol",
                str(data_dir / "protocol.json"),
            ]
        )
        assert code == 3


class TestSweep:
    def test_summary_row_count_and_determinism(self, config_path, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep-margins", "--config", config_path, "--out", str(out)]) == 0
        lines = (out / "summary.csv").read_text().strip().splitlines()
        assert lines[0] == "margin,metric,target,achieved,threshold,value"
        assert len(lines) == 1 + len(SMALL["sweep_grid"]) * 6
        for offset in SMALL["sweep_grid"]:
            assert (out / f"margin_{offset:+.3f}" / "fnmr.csv").exists()
        again = tmp_path / "sweep2"
        assert main(["sweep-margins", "--config", config_path, "--out", str(again)]) == 0
        assert tree_bytes(out) == tree_bytes(again)


class TestAdapt:
    def test_two_stage_outputs_and_restart_determinism(self, config_path, tmp_path):
        out = tmp_path / "adapt"
        assert main(["adapt", "--config", config_path, "--out", str(out)]) == 0
        assert (out / "stage1_checkpoint.bin").exists()
        assert (out / "stage2_checkpoint.bin").exists()
        lines = (out / "stage_metrics.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 2 * 6
        # stage 2 rerun from the emitted stage-1 checkpoint is bit-identical
        rerun = tmp_path / "rerun"
        assert main(
            [
                "adapt",
                "--config",
                config_path,
                "--out",
                str(rerun),
                "--checkpoint",
                str(out / "stage1_checkpoint.bin"),
            ]
        ) == 0
        assert (rerun / "stage2_checkpoint.bin").read_bytes() == (out / "stage2_checkpoint.bin").read_bytes()

    def test_paper_stage_structure_in_defaults(self):
        config = ExperimentConfig()
        assert config.adapt.stage1_epochs == 15
        assert config.adapt.stage2_epochs == 10
        assert config.adapt.stage2_morph_offset == -0.1
        # one-decade drop between stages, linear schedules
        assert config.adapt.stage2_lr_start == pytest.approx(config.adapt.stage1_lr_start / 10)


class TestAnalyzeFeatures:
    def test_outputs_and_structure(self, config_path, data_dir, train_dir, tmp_path):
        out = tmp_path / "features"
        code = main(
            [
                "analyze-features",
                "--config",
                config_path,
                "--out",
                str(out),
                "--checkpoint",
                str(train_dir / "checkpoint.bin"),
                "--data",
                str(data_dir / "bona_fides.jsonl"),
                "--protocol",
                str(data_dir / "protocol.json"),
            ]
        )
        assert code == 0
        protocol = json.loads((data_dir / "protocol.json").read_text())
        svg = (out / "features.svg").read_text()
        assert svg.count("<circle") == 3 * len(protocol)
        assert svg.count("<ellipse") == 1
        header, row = (out / "ellipse.csv").read_text().strip().splitlines()
        w, h, s, *_ = (float(v) for v in row.split(","))
        assert s == (w + h) / 2
        aligned = (out / "aligned_points.csv").read_text().strip().splitlines()
        assert len(aligned) == 1 + 3 * len(protocol)


class TestExitCodes:
    def test_missing_config_file_is_io_error(self, tmp_path):
        assert main(["gen-data", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 5

    def test_bad_config_value(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"train": {"epochs": 0}}))
        assert main(["gen-data", "--config", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_corrupt_checkpoint_is_data_error(self, config_path, data_dir, tmp_path):
        ckpt = tmp_path / "junk.bin"
        ckpt.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        code = main(
            [
                "eval",
                "--config",
                config_path,
                "--out",
                str(tmp_path / "o"),
                "--checkpoint",
                str(ckpt),
                "--data",
                str(data_dir / "bona_fides.jsonl"),
                "--protocol",
                str(data_dir / "protocol.json"),
            ]
        )
        assert code == 3
