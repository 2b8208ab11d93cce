"""
End-to-end tests across the command line, the HTTP API and the MCP tools,
plus the desk-scale acceptance runs (marked ``slow``).
"""

import csv
import json

import pytest
from fastapi.testclient import TestClient

from conftest import tiny_scene_config
from src.api.app import create_app
from src.cli.artifacts import inspect_artifact, load_labels, load_tensor, save_detections
from src.cli.experiment import save_scene_config
from src.cli.main import EXIT_OK, main
from src.core.models import Detection
from src.detector.model import DetectMode
from src.evaluation.sweep import GTMode, default_offsets, frequency_sweep
from src.flextune.calibration import TuneConfig, confidence_filter, link_tracklets, nms, prune_and_emit
from src.mcp_server import tools
from src.synth.presets import PRESETS, despawn_scene_config
from src.synth.scene import generate_scene, gt_at


@pytest.fixture
def scene_dir(tmp_path):
    """A tiny scene written by ``synth-gen``."""
    config_path = tmp_path / "tiny.json"
    save_scene_config(config_path, tiny_scene_config())
    out = tmp_path / "scene"
    assert main(["synth-gen", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
    return out


class TestSurfacesAgree:
    """The CLI, the API and the MCP tools read the same artifacts the same way."""

    def test_inspect_upload_matches_file(self, scene_dir):
        payload = (scene_dir / "events.evt1").read_bytes()
        response = TestClient(create_app()).post(
            "/api/v1/inspect", params={"filename": "events.evt1"}, content=payload
        )
        assert response.status_code == 200
        assert response.json()["data"]["events"] == inspect_artifact(scene_dir / "events.evt1")["events"]

    def test_voxelize_everywhere(self, scene_dir, tmp_path):
        events = scene_dir / "events.evt1"
        out = tmp_path / "window.npz"
        assert main(["voxelize", str(events), "--t1", "0", "--t2", "100000", "--bins", "3", "--out", str(out)]) == 0
        tensor = load_tensor(out)

        response = TestClient(create_app()).post(
            "/api/v1/voxelize", params={"t1": 0, "t2": 100_000, "bins": 3}, content=events.read_bytes()
        )
        assert response.status_code == 200
        assert response.json()["data"]["per_bin"] == [int(v) for v in tensor.data.sum(axis=(0, 2, 3))]

    async def test_labels_scored_against_themselves(self, scene_dir, tmp_path):
        labels = load_labels(scene_dir / "labels.json")
        dets = {
            t: [Detection(box=b.box, class_id=b.class_id, score=1.0, t=t) for b in boxes]
            for t, boxes in labels.items()
        }
        dets_path = save_detections(tmp_path / "dets.json", dets)
        result = await tools.evaluate_detections(str(dets_path), str(scene_dir / "labels.json"))
        assert result["map"] == 1.0


class TestSpuriousDetections:
    """Single-window false positives never become pseudo-labels."""

    def test_injected_spurious_detections_are_pruned(self):
        windows = 40
        per_window = [
            [Detection(box=(10 + 0.5 * k, 10.0, 30 + 0.5 * k, 30.0), class_id=0, score=0.9, t=k)]
            for k in range(windows)
        ]
        for i in range(100):
            x = 100.0 + 12.0 * i
            per_window[i % windows].append(Detection(box=(x, 200.0, x + 10.0, 210.0), class_id=i % 2, score=0.9, t=i))

        config = TuneConfig(min_track_len=6, tau_iou=0.6)
        filtered = [nms(confidence_filter(dets, config), config.nms_iou) for dets in per_window]
        labels = prune_and_emit(link_tracklets(filtered, config.tau_iou), config)

        assert sorted(labels.labels) == list(range(windows))
        boxes = [box for window_boxes in labels.labels.values() for box in window_boxes]
        assert len(boxes) == windows
        assert all(box.box[0] < 100.0 for box in boxes)


class ExactDetector:
    """Reports the scene's exact boxes at the window end."""

    def __init__(self, scene):
        self.scene = scene

    def detect(self, tensor, frame, mode=DetectMode.FUSED):
        t2 = tensor.window.t2
        return [Detection(box=g.box, class_id=g.class_id, score=1.0, t=t2) for g in gt_at(self.scene, t2)]


def write_experiment(directory, scene_config, mode, seed):
    save_scene_config(directory / "scene.json", scene_config)
    document = {
        "schema_version": 1,
        "scene": "scene.json",
        "voxel": {"T": 5, "H": scene_config.sensor_h, "W": scene_config.sensor_w},
        "frequency": {"base_hz": 20.0, "high_hz": 180.0, "ratio": 9},
        "training": {"lr": 0.02, "epochs": 30, "seed": seed, "mode": mode},
        "tune": {"rounds": 5},
        "evaluation": {"freqs": [20.0, 180.0], "gt_mode": "exact"},
        "output_dir": "run",
    }
    path = directory / "experiment.json"
    path.write_text(json.dumps(document))
    return path


def map_by_frequency(metrics_path):
    with open(metrics_path, newline="") as handle:
        return {float(row["frequency_hz"]): float(row["map"] or 0.0) for row in csv.DictReader(handle)}


@pytest.mark.slow
class TestDeskScaleAcceptance:
    """Direction-only reproductions on the synthetic benchmark."""

    def test_interpolated_ground_truth_never_beats_exact(self):
        scene = generate_scene(despawn_scene_config(seed=0))
        offsets = default_offsets(10)[1:-1]
        exact = frequency_sweep(ExactDetector(scene), scene, offsets, GTMode.EXACT)
        interpolated = frequency_sweep(ExactDetector(scene), scene, offsets, GTMode.INTERPOLATED)
        for exact_point, interpolated_point in zip(exact.points, interpolated.points):
            if interpolated_point.bundle.map is not None:
                assert interpolated_point.bundle.map <= exact_point.bundle.map

    def test_high_frequency_degrades_event_only_detection(self, tmp_path):
        experiment = write_experiment(tmp_path, PRESETS["standard"](0), DetectMode.EVENT_ONLY.value, seed=7)
        assert main(["train", "--config", str(experiment)]) == EXIT_OK
        assert main(["eval", "--config", str(experiment)]) == EXIT_OK
        scores = map_by_frequency(tmp_path / "run" / "metrics.csv")
        assert scores[180.0] < scores[20.0]

    @pytest.mark.parametrize("seed", [7, 8, 9])
    def test_flextune_recovers_high_frequency_map(self, tmp_path, seed):
        experiment = write_experiment(tmp_path, PRESETS["standard"](0), DetectMode.EVENT_ONLY.value, seed=seed)
        assert main(["train", "--config", str(experiment)]) == EXIT_OK
        assert main(["eval", "--config", str(experiment), "--out", str(tmp_path / "before")]) == EXIT_OK
        assert main(["flextune", "--config", str(experiment)]) == EXIT_OK
        assert main(["eval", "--config", str(experiment), "--out", str(tmp_path / "after")]) == EXIT_OK
        before = map_by_frequency(tmp_path / "before" / "metrics.csv")
        after = map_by_frequency(tmp_path / "after" / "metrics.csv")
        assert after[180.0] > before[180.0]
