import json
import os

import numpy as np
import pytest

from vimu.cli import main
from vimu.pipeline import load_window_table


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_ds")
    code = main([
        "synth", "--out", str(root), "--subjects", "2", "--gestures", "2",
        "--trials", "4", "--trial-seconds", "5.0", "--seed", "3",
    ])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def windows_file(dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_win") / "w.npz"
    code = main([
        "preprocess", "--dataset", str(dataset_dir), "--out", str(out),
        "--window-ms", "200", "--step-ms", "200", "--decimation", "4",
    ])
    assert code == 0
    return out


def run_config(dataset_dir, out_dir, seed=0, arms="unimodal"):
    return {
        "dataset": str(dataset_dir),
        "out_dir": str(out_dir),
        "arms": [a for a in arms.split(",")],
        "seed": seed,
        "preproc": {"window_ms": 200.0, "step_ms": 200.0, "decimation": 4,
                    "rms_ms": 100.0, "mavg_ms": 100.0, "butter_cutoff_hz": 1.0},
        "gan": {"epochs": 3, "batch_size": 8, "max_pairs": 48, "generator_maps": [4, 2, 1]},
        "classifier": {"batch_size": 16, "epochs": 2, "decay_epochs": [1], "seed": seed},
        "network": {"conv_maps": 2, "lc_maps": 2, "dense_units": 8, "fusion_hidden": 8,
                    "dropout": 0.5},
    }


class TestExitCodes:
    def test_usage_error_is_one(self):
        assert main(["synth"]) == 1  # missing --out
        assert main(["not-a-command"]) == 1

    def test_data_error_is_two(self, tmp_path):
        assert main(["preprocess", "--dataset", str(tmp_path / "missing"), "--out",
                     str(tmp_path / "w.npz")]) == 2

    def test_bad_config_key_is_one(self, dataset_dir, tmp_path):
        cfg = run_config(dataset_dir, tmp_path / "out")
        cfg["bogus"] = True
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert main(["run", "--config", str(path)]) == 1


class TestSynthAndPreprocess:
    def test_synth_writes_dataset(self, dataset_dir):
        assert (dataset_dir / "manifest.json").exists()
        assert len(list(dataset_dir.glob("*.gst"))) == 2 * 2 * 4

    def test_preprocess_emits_table(self, windows_file):
        table = load_window_table(windows_file)
        assert table.semg_hgr.shape[0] > 0
        assert table.imu is not None


class TestStagePipeline:
    def test_gan_stage_then_generate(self, windows_file, tmp_path, capsys):
        bundle_dir = tmp_path / "gan"
        code = main([
            "train-gan", "--windows", str(windows_file), "--out", str(bundle_dir),
            "--epochs", "2", "--batch-size", "8", "--max-pairs", "32",
            "--generator-maps", "4,2,1", "--seed", "0",
        ])
        assert code == 0
        assert (bundle_dir / "generator.ckpt").exists()
        assert (bundle_dir / "generator.json").exists()
        virt = tmp_path / "virt.npz"
        assert main(["generate-imu", "--generator", str(bundle_dir),
                     "--windows", str(windows_file), "--out", str(virt)]) == 0
        with np.load(virt) as z:
            table = load_window_table(windows_file)
            assert z["virtual_imu"].shape == (len(table), 10, 3)

    def test_train_clf_and_evaluate(self, windows_file, tmp_path):
        model_dir = tmp_path / "clf"
        code = main([
            "train-clf", "--windows", str(windows_file), "--out", str(model_dir),
            "--epochs", "2", "--batch-size", "16", "--conv-maps", "2", "--lc-maps", "2",
            "--dense-units", "8", "--fusion-hidden", "8", "--seed", "0",
        ])
        assert code == 0
        preds = tmp_path / "preds.csv"
        assert main(["evaluate", "--model", str(model_dir), "--windows", str(windows_file),
                     "--out", str(preds)]) == 0
        lines = preds.read_text().strip().split("\n")
        assert lines[0] == "window_id,true_label,predicted_label,max_prob"
        table = load_window_table(windows_file)
        assert len(lines) == 1 + len(table)


class TestRun:
    def test_run_writes_report(self, dataset_dir, tmp_path):
        out = tmp_path / "out"
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(run_config(dataset_dir, out)))
        assert main(["run", "--config", str(cfg_path)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["vimu_report"] == 1
        assert "unimodal" in report["arm_summary"]

    def test_seed_env_override(self, dataset_dir, tmp_path):
        out = tmp_path / "outenv"
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(run_config(dataset_dir, out, seed=0)))
        os.environ["VIMU_SEED"] = "123"
        try:
            assert main(["run", "--config", str(cfg_path)]) == 0
        finally:
            del os.environ["VIMU_SEED"]
        report = json.loads((out / "report.json").read_text())
        assert report["seed"] == 123

    def test_flag_overrides(self, dataset_dir, tmp_path):
        out = tmp_path / "outflag"
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(run_config(dataset_dir, tmp_path / "ignored")))
        assert main(["run", "--config", str(cfg_path), "--out", str(out), "--seed", "9"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["seed"] == 9

    def test_report_reemission(self, dataset_dir, tmp_path):
        out = tmp_path / "outrep"
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(run_config(dataset_dir, out)))
        assert main(["run", "--config", str(cfg_path)]) == 0
        out2 = tmp_path / "reemit"
        assert main(["report", "--report", str(out / "report.json"), "--out", str(out2),
                     "--formats", "csv,svg"]) == 0
        assert (out2 / "report.csv").exists() and (out2 / "report.svg").exists()
