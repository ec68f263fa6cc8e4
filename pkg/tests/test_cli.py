import json
import subprocess
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from scanres.cli import cli
from scanres.raster import load_image


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    runner = CliRunner()
    result = runner.invoke(
        cli, ["synth", "--n", "12", "--size", "48", "--seed", "31", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def dataset_csv(runner, corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_data") / "dataset.csv"
    result = runner.invoke(cli, [
        "features",
        "--manifest", str(corpus_dir / "manifest.json"),
        "--ratings", str(corpus_dir / "ratings.jsonl"),
        "--out", str(out),
        "--seed", "3",
    ])
    assert result.exit_code == 0, result.output
    return out


class TestSynthFeatures:
    def test_synth_emits_paths(self, corpus_dir):
        assert (corpus_dir / "manifest.json").exists()
        assert (corpus_dir / "ratings.jsonl").exists()

    def test_plain_feature_rows(self, runner, corpus_dir, tmp_path):
        out = tmp_path / "rows.csv"
        result = runner.invoke(cli, [
            "features", "--manifest", str(corpus_dir / "manifest.json"),
            "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "region_id,dpi," + ",".join(f"f{i}" for i in range(9))
        assert len(lines) == 1 + 12 * 4  # one row per (region, dpi)

    def test_jsonl_rows(self, runner, corpus_dir, tmp_path):
        out = tmp_path / "rows.jsonl"
        result = runner.invoke(cli, [
            "features", "--manifest", str(corpus_dir / "manifest.json"),
            "--out", str(out), "--format", "jsonl",
        ])
        assert result.exit_code == 0, result.output
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 48 and len(rows[0]["features"]) == 9


class TestEmulate:
    def test_emulate_writes_images(self, runner, corpus_dir, tmp_path):
        page = next((corpus_dir / "pages").glob("*.png"))
        result = runner.invoke(cli, [
            "emulate", "--image", str(page), "--target-dpi", "100",
            "--out-at-base", str(tmp_path / "b.png"),
            "--out-native", str(tmp_path / "n.png"),
        ])
        assert result.exit_code == 0, result.output
        at_base = load_image(tmp_path / "b.png")
        native = load_image(tmp_path / "n.png")
        assert at_base.width == 48 and native.width == 16


class TestTrainEvaluatePredict:
    def test_pipeline(self, runner, corpus_dir, dataset_csv, tmp_path):
        model_path = tmp_path / "model.json"
        result = runner.invoke(cli, [
            "train", "--dataset", str(dataset_csv), "--out", str(model_path),
        ])
        assert result.exit_code == 0, result.output
        assert json.loads(model_path.read_text())["version"] == 1

        page = sorted((corpus_dir / "pages").glob("*.png"))[0]
        seg = corpus_dir / "seg" / (page.stem + ".json")
        result = runner.invoke(cli, [
            "predict", "--model", str(model_path),
            "--image", str(page), "--segmentation", str(seg),
        ])
        assert result.exit_code == 0, result.output
        mapping = json.loads(result.output)
        assert set(mapping.values()) <= {100, 150, 200, 300}

    def test_evaluate_deterministic(self, runner, dataset_csv, tmp_path):
        outputs = []
        for name in ("a", "b"):
            path = tmp_path / f"{name}.json"
            result = runner.invoke(cli, [
                "evaluate", "--dataset", str(dataset_csv),
                "--runs", "1", "--k", "2", "--seed", "7",
                "--json-out", str(path),
            ])
            assert result.exit_code == 0, result.output
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]
        report = json.loads(outputs[0])
        assert 0.0 <= report["mean_accuracy"] <= 1.0
        assert report["runs"] == 1

    def test_select_emits_ranking(self, runner, dataset_csv):
        result = runner.invoke(cli, [
            "select", "--dataset", str(dataset_csv), "--d", "2", "--seed", "5",
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert sorted(payload["ranking"]) == list(range(9))
        assert len(payload["selected"]) == 2


class TestAugmentCalibrate:
    def test_augment_with_param(self, runner, corpus_dir, tmp_path):
        out = tmp_path / "aug"
        result = runner.invoke(cli, [
            "augment", "--manifest", str(corpus_dir / "manifest.json"),
            "--kind", "gaussian", "--param", "0.002",
            "--copies", "1", "--seed", "3", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        ledger = (out / "augment_ledger.jsonl").read_text().splitlines()
        assert len(ledger) == 12
        entry = json.loads(ledger[0])
        assert entry["kind"] == "gaussian" and entry["parameter"] == 0.002
        assert 0.0 <= entry["ssim"] <= 1.0
        assert len(list(out.glob("*.png"))) == 12

    def test_augment_requires_one_mode(self, runner, corpus_dir, tmp_path):
        result = runner.invoke(cli, [
            "augment", "--manifest", str(corpus_dir / "manifest.json"),
            "--kind", "gaussian", "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2

    def test_calibrate_outputs_parameter(self, runner, corpus_dir):
        result = runner.invoke(cli, [
            "calibrate", "--manifest", str(corpus_dir / "manifest.json"),
            "--kind", "sp", "--target", "0.7", "--tol", "0.02", "--seed", "5",
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["kind"] == "salt_pepper"
        assert abs(payload["measured_mean_ssim"] - 0.7) <= 0.03


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self):
        proc = subprocess.run(
            [sys.executable, "-m", "scanres.cli", "synth", "--bogus"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2

    def test_runtime_error_is_exit_one(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "scanres.cli", "train",
             "--dataset", str(tmp_path / "missing.csv"),
             "--out", str(tmp_path / "m.json")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 1
        assert "error" in proc.stderr.lower()

    def test_seed_env_fallback(self, corpus_dir, tmp_path):
        import os

        env = dict(os.environ, SCANRES_SEED="123")
        proc = subprocess.run(
            [sys.executable, "-m", "scanres.cli", "synth", "--n", "4",
             "--out", str(tmp_path / "s")],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["seed"] == 123
