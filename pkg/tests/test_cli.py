"""
Tests for the ``flexevent`` command line.
"""

import json

import numpy as np
import pytest

from conftest import tiny_scene_config
from src.cli.artifacts import inspect_artifact, load_labels, load_tensor
from src.cli.experiment import load_experiment, save_scene_config
from src.cli.main import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, parse_frequencies, run_bench
from src.core.exceptions import ArgumentError, DataError, UsageError
from src.events.evt_format import read_evt1, write_evt1
from src.events.stream import EventStream


def write_experiment(directory, **overrides):
    """Tiny scene plus an experiment that trains and tunes in a few steps."""
    directory.mkdir(parents=True, exist_ok=True)
    save_scene_config(directory / "scene.json", tiny_scene_config())
    document = {
        "schema_version": 1,
        "scene": "scene.json",
        "voxel": {"T": 2, "H": 16, "W": 16},
        "frequency": {"base_hz": 20.0, "high_hz": 80.0, "ratio": 4},
        "fusion": {"mode": "gated", "lambda_reg": 0.01, "gate_noise": True},
        "model": {"c1": 2, "c2": 3, "hidden": 4, "dtype": "float64"},
        "tune": {"min_track_len": 2, "rounds": 1, "round_epochs": 1},
        "training": {"lr": 0.01, "epochs": 1, "seed": 5, "batch_size": 4},
        "evaluation": {"freqs": [20.0, 40.0, 80.0], "gt_mode": "exact"},
        "output_dir": "run",
    }
    document.update(overrides)
    path = directory / "experiment.json"
    path.write_text(json.dumps(document))
    return path


class TestArgumentHandling:
    """Exit codes for usage and data errors."""

    def test_unknown_subcommand(self, capsys):
        assert main(["nonsense"]) == EXIT_USAGE
        assert "usage" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert main([]) == EXIT_USAGE

    def test_help_exits_cleanly(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "synth-gen" in capsys.readouterr().out

    def test_bad_frequency_list(self, tmp_path):
        """Non-increasing --freqs is a usage error before anything is read."""
        assert main(["eval", "--config", str(tmp_path / "x.json"), "--freqs", "60,20"]) == EXIT_USAGE
        assert main(["eval", "--config", str(tmp_path / "x.json"), "--freqs", "20,abc"]) == EXIT_USAGE

    def test_parse_frequencies(self):
        assert parse_frequencies("20, 36,45") == [20.0, 36.0, 45.0]
        with pytest.raises(UsageError):
            parse_frequencies("")

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["voxelize", str(tmp_path / "missing.evt1"), "--out", str(tmp_path / "t.npz")]) == EXIT_DATA

    def test_corrupt_file_is_data_error(self, tmp_path):
        path = tmp_path / "bad.evt1"
        path.write_bytes(b"EVT9" + bytes(12))
        assert main(["voxelize", str(path), "--out", str(tmp_path / "t.npz")]) == EXIT_DATA


class TestVoxelizeCommand:
    """The voxelize subcommand."""

    def test_empty_stream_gives_zero_tensor(self, tmp_path):
        """A header-only EVT1 file voxelizes to an all-zero tensor."""
        events = write_evt1(tmp_path / "empty.evt1", EventStream.empty(8, 6))
        out = tmp_path / "tensor.npz"
        assert main(["voxelize", str(events), "--bins", "3", "--out", str(out)]) == EXIT_OK
        tensor = load_tensor(out)
        assert tensor.data.shape == (2, 3, 6, 8)
        assert tensor.total == 0

    def test_explicit_window(self, tmp_path):
        stream = EventStream.from_columns([0, 1, 2], [0, 0, 0], [5, 15, 25], [1, 1, -1], sensor_w=4, sensor_h=1)
        events = write_evt1(tmp_path / "e.evt1", stream)
        out = tmp_path / "tensor.npz"
        assert main(["voxelize", str(events), "--t1", "10", "--t2", "30", "--bins", "2", "--out", str(out)]) == EXIT_OK
        tensor = load_tensor(out)
        assert tensor.total == 2
        assert (tensor.window.t1, tensor.window.t2) == (10, 30)

    def test_empty_window_is_rejected(self, tmp_path):
        events = write_evt1(tmp_path / "e.evt1", EventStream.empty(4, 4))
        assert main(["voxelize", str(events), "--t1", "10", "--t2", "10", "--out", str(tmp_path / "t.npz")]) == EXIT_DATA

    def test_zero_bins_is_usage_error(self, tmp_path):
        events = write_evt1(tmp_path / "e.evt1", EventStream.empty(4, 4))
        assert main(["voxelize", str(events), "--bins", "0", "--out", str(tmp_path / "t.npz")]) == EXIT_USAGE


class TestSynthAndInspect:
    """synth-gen output is readable by inspect."""

    def test_generated_files_inspect_cleanly(self, tmp_path, capsys):
        config = save_scene_config(tmp_path / "tiny.json", tiny_scene_config())
        out = tmp_path / "scene"
        assert main(["synth-gen", "--config", str(config), "--out", str(out)]) == EXIT_OK
        capsys.readouterr()

        frames = sorted((out / "frames").glob("*.pgm"))
        assert len(frames) == 5
        stream = read_evt1(out / "events.evt1")
        assert (stream.sensor_w, stream.sensor_h) == (16, 16)
        assert sorted(load_labels(out / "labels.json")) == [0, 50_000, 100_000, 150_000, 200_000]

        paths = [out / "scene.json", out / "events.evt1", out / "labels.json", *frames]
        assert main(["inspect", *map(str, paths)]) == EXIT_OK
        summaries = json.loads(capsys.readouterr().out)
        assert [s["kind"] for s in summaries[:3]] == ["scene", "evt1", "labels"]
        assert all(s["kind"] == "pgm" for s in summaries[3:])

    def test_inspect_unknown_file(self, tmp_path):
        path = tmp_path / "notes.txt"
        path.write_text("hello")
        assert main(["inspect", str(path)]) == EXIT_DATA


class TestExperimentCommands:
    """train, flextune and eval on a miniature experiment."""

    def test_pipeline_writes_metrics(self, tmp_path, capsys):
        experiment = write_experiment(tmp_path / "exp")
        run = tmp_path / "exp" / "run"
        assert main(["train", "--config", str(experiment)]) == EXIT_OK
        assert (run / "model.bin").exists() and (run / "model.json").exists()
        assert main(["flextune", "--config", str(experiment)]) == EXIT_OK
        assert (run / "model_tuned.bin").exists()
        assert inspect_artifact(run / "pseudo_labels.jsonl")["kind"] == "pseudo_labels"
        capsys.readouterr()

        assert main(["eval", "--config", str(experiment)]) == EXIT_OK
        table = capsys.readouterr().out.splitlines()
        assert len(table) == 4
        assert table == (run / "metrics.csv").read_text().splitlines()
        plot = json.loads((run / "plot.json").read_text())
        assert plot["x"] == [20.0, 40.0, 80.0]
        assert plot["metadata"]["delta_T_us"] == 50_000

    def test_eval_is_deterministic(self, tmp_path):
        """Two runs of the same experiment write identical metrics."""
        tables = []
        for name in ("a", "b"):
            experiment = write_experiment(tmp_path / name)
            assert main(["train", "--config", str(experiment)]) == EXIT_OK
            assert main(["eval", "--config", str(experiment), "--gt-mode", "interpolated"]) == EXIT_OK
            tables.append((tmp_path / name / "run" / "metrics.csv").read_text())
        assert tables[0] == tables[1]

    def test_flextune_without_model_is_data_error(self, tmp_path):
        experiment = write_experiment(tmp_path / "exp")
        assert main(["flextune", "--config", str(experiment)]) == EXIT_DATA

    def test_sensor_mismatch_is_rejected(self, tmp_path):
        experiment = write_experiment(tmp_path / "exp", voxel={"T": 2, "H": 8, "W": 8})
        assert main(["train", "--config", str(experiment)]) == EXIT_DATA

    def test_experiment_errors_name_the_field(self, tmp_path):
        experiment = write_experiment(tmp_path / "exp", training={"lr": 0.01, "epochs": 1})
        with pytest.raises(DataError) as exc_info:
            load_experiment(experiment)
        assert exc_info.value.field == "training.seed"
        assert main(["train", "--config", str(experiment)]) == EXIT_DATA

    def test_relative_paths_resolve_against_file(self, tmp_path):
        config = load_experiment(write_experiment(tmp_path / "exp"))
        assert config.scene_path == (tmp_path / "exp").resolve() / "scene.json"
        assert config.output_path == (tmp_path / "exp").resolve() / "run"


class TestBench:
    """Voxelization throughput report."""

    def test_report_fields(self):
        report = run_bench(events=2_000, runs=5, bins=2, seed=0, sensor=(32, 24))
        assert report["runs"] == 5 and len(report["seconds"]) == 5
        assert report["median_seconds"] == float(np.median(report["seconds"]))

    def test_needs_five_runs(self):
        with pytest.raises(ArgumentError) as exc_info:
            run_bench(events=100, runs=4, bins=2, seed=0)
        assert exc_info.value.field == "runs"
        assert main(["bench", "--events", "100", "--runs", "3"]) == EXIT_DATA
