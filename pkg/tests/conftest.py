"""
Shared fixtures: small synthetic scenes and miniature models.
"""

import os

os.environ.setdefault("ENVIRONMENT", "test")

from pathlib import Path

import numpy as np
import pytest

from src.core.models import Detection, GroundTruthBox
from src.detector.model import ModelSpec, ToyModel
from src.events.stream import EVENT_DTYPE, EventStream
from src.events.windows import FrequencyPlan
from src.synth.scene import ObjectSpec, SceneConfig, TrajectoryKnot, generate_scene

FORMATS_DIR = Path(__file__).resolve().parent.parent / "docs" / "formats"


def random_stream(rng: np.random.Generator, count: int, width: int, height: int, t_max: int) -> EventStream:
    """Sorted uniform random events."""
    events = np.zeros(count, dtype=EVENT_DTYPE)
    events["x"] = rng.integers(0, width, count)
    events["y"] = rng.integers(0, height, count)
    events["t"] = np.sort(rng.integers(0, t_max, count))
    events["p"] = rng.choice(np.array([-1, 1], dtype=np.int8), count)
    return EventStream(events, width, height)


def make_box(x_min, y_min, x_max, y_max, class_id=0, track_id=0) -> GroundTruthBox:
    return GroundTruthBox(box=(x_min, y_min, x_max, y_max), class_id=class_id, track_id=track_id)


def make_det(x_min, y_min, x_max, y_max, score=0.9, class_id=0, t=0) -> Detection:
    return Detection(box=(x_min, y_min, x_max, y_max), class_id=class_id, score=score, t=t)


def tiny_scene_config(seed: int = 3, noise_rate: float = 0.0, duration: int = 200_000) -> SceneConfig:
    """16x16 sensor, one car sliding right, frames at 20 Hz."""
    car = ObjectSpec(
        class_id=0,
        size=(6.0, 4.0),
        trajectory=[TrajectoryKnot(t=0, x=1.0, y=6.0), TrajectoryKnot(t=duration, x=9.0, y=6.0)],
        intensity=0.5,
        spawn_t=0,
        despawn_t=duration + 1,
    )
    return SceneConfig(
        sensor_w=16,
        sensor_h=16,
        duration=duration,
        frame_hz=20.0,
        contrast_threshold=0.15,
        objects=[car],
        background_intensity=0.4,
        noise_rate=noise_rate,
        seed=seed,
        micro_step_us=500,
    )


def tiny_spec(**overrides) -> ModelSpec:
    values = dict(bins=2, height=16, width=16, c1=2, c2=3, hidden=4, dtype="float64")
    values.update(overrides)
    return ModelSpec(**values)


@pytest.fixture(scope="session")
def tiny_scene():
    return generate_scene(tiny_scene_config())


@pytest.fixture(scope="session")
def plan_ratio_4():
    return FrequencyPlan(base_hz=20.0, high_hz=80.0, ratio=4)


@pytest.fixture
def tiny_model():
    return ToyModel.initialize(tiny_spec(), seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
