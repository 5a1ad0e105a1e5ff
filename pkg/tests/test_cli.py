import json
import subprocess
import sys

import pytest
import yaml

from ragek.cli import main
from ragek.config import RunConfig, packaged_config

SMALL = dict(num_clients=4, layer_sizes=[8, 6, 4], input_dim=8, num_classes=4, per_class_count=20,
             shard_plan=[[0, 1], [0, 1], [2, 3], [2, 3]], r=12, k=3, local_steps=2,
             recluster_period=4, iterations=8, batch_size=16, lr=1e-2, ps_lr=1e-2)


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(yaml.safe_dump(SMALL))
    return p


def test_validate_mnist_config(capsys):
    # the MNIST files are absent; validation must not open them
    assert main(["validate", "--config", str(packaged_config("mnist_pairs"))]) == 0
    assert "d=39760" in capsys.readouterr().out


@pytest.mark.parametrize("name", ["mnist_pairs", "synthetic_pairs", "synthetic_cifar_pairs"])
def test_packaged_configs_validate(name):
    RunConfig.load(packaged_config(name)).validate()


def test_validate_reports_constraint(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump({**SMALL, "iterations": 2}))
    assert main(["validate", "--config", str(p)]) == 2
    err = capsys.readouterr().err
    assert "iterations" in err and "recluster_period" in err


@pytest.mark.parametrize("text", ["bogus_key: 1\n", "[1, 2]\n", "a: [\n"])
def test_bad_config_files_exit_2(tmp_path, text):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    assert main(["validate", "--config", str(p)]) == 2


def test_missing_config_and_bad_args():
    assert main(["validate", "--config", "/nonexistent.yaml"]) == 2
    assert main(["run"]) == 2
    assert main(["frobnicate"]) == 2


def test_run_is_byte_reproducible(cfg_path, tmp_path):
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes()
    resolved = yaml.safe_load((a / "config.yaml").read_text())
    assert resolved["aggregation_scale"] == 0.25 and resolved["seed"] == 0


def test_run_overrides(cfg_path, tmp_path):
    assert main(["run", "--config", str(cfg_path), "--seed", "3", "--variant", "rtopk",
                 "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert rep["seed"] == 3 and rep["sparsifier"] == "rtopk" and rep["recluster_events"] == []


def test_run_missing_mnist_is_runtime_error(tmp_path):
    p = tmp_path / "m.yaml"
    p.write_text(yaml.safe_dump({"data": "mnist", "mnist_images": str(tmp_path / "x"),
                                 "mnist_labels": str(tmp_path / "y"), "iterations": 20}))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_compare_and_heatmap(cfg_path, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg_path), "--out", str(out)]) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0] == "variant,seed,rounds_to_target,final_mean_accuracy"
    assert len(lines) == 1 + 2 * 5
    med = json.loads((out / "medians.json").read_text())
    assert set(med["median_rounds_to_target"]) == {"ragek", "rtopk"}
    assert med["seeds"] == [0, 1, 2, 3, 4]

    run_dir = out / "ragek_seed0"
    assert main(["heatmap", "--run", str(run_dir)]) == 0
    assert (run_dir / "heatmap_similarity.csv").exists() and (run_dir / "heatmap_distance.csv").exists()
    assert main(["heatmap", "--run", str(tmp_path / "nothing")]) == 1


def test_console_entry_point(cfg_path):
    res = subprocess.run([sys.executable, "-m", "ragek.cli", "validate", "--config", str(cfg_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "d=" in res.stdout
