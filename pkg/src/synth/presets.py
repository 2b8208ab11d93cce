"""
Ready-made scene configurations.

Both presets use a 64x64 sensor and 20 Hz frames. Object placement, speed and
turning points come from the ``scene`` stream of the seed, so one seed always
yields one scene.
"""

from typing import List

import numpy as np

from ..core.models import ObjectClass
from ..core.seeding import rng_stream
from .scene import ObjectSpec, SceneConfig, TrajectoryKnot

SENSOR = 64
DURATION_US = 1_000_000
FRAME_HZ = 20.0
KNOT_SPACING_US = 250_000

CAR_SIZE = (16.0, 10.0)
PEDESTRIAN_SIZE = (5.0, 10.0)


def _wandering_trajectory(
    rng: np.random.Generator,
    size,
    speed_range,
    duration: int,
    sensor: int,
) -> List[TrajectoryKnot]:
    """Piecewise-linear path that turns every ``KNOT_SPACING_US`` and stays on the sensor."""
    x = float(rng.uniform(0, sensor - size[0]))
    y = float(rng.uniform(0, sensor - size[1]))
    knots = [TrajectoryKnot(t=0, x=x, y=y)]
    for t in range(KNOT_SPACING_US, duration + KNOT_SPACING_US, KNOT_SPACING_US):
        speed = float(rng.uniform(*speed_range))
        heading = float(rng.uniform(0, 2 * np.pi))
        step = speed * KNOT_SPACING_US / 1e6
        x = float(np.clip(x + step * np.cos(heading), 0, sensor - size[0]))
        y = float(np.clip(y + step * np.sin(heading), 0, sensor - size[1]))
        knots.append(TrajectoryKnot(t=t, x=x, y=y))
    return knots


def standard_scene_config(seed: int, noise_rate: float = 0.5) -> SceneConfig:
    """Two fast bright cars and two slow dim pedestrians for one second."""
    rng = rng_stream(seed, "scene")
    objects = []
    for _ in range(2):
        objects.append(
            ObjectSpec(
                class_id=int(ObjectClass.CAR),
                size=CAR_SIZE,
                trajectory=_wandering_trajectory(rng, CAR_SIZE, (40.0, 80.0), DURATION_US, SENSOR),
                intensity=0.5,
                spawn_t=0,
                despawn_t=DURATION_US + 1,
            )
        )
    for _ in range(2):
        objects.append(
            ObjectSpec(
                class_id=int(ObjectClass.PEDESTRIAN),
                size=PEDESTRIAN_SIZE,
                trajectory=_wandering_trajectory(rng, PEDESTRIAN_SIZE, (5.0, 15.0), DURATION_US, SENSOR),
                intensity=-0.25,
                spawn_t=0,
                despawn_t=DURATION_US + 1,
            )
        )
    return SceneConfig(
        sensor_w=SENSOR,
        sensor_h=SENSOR,
        duration=DURATION_US,
        frame_hz=FRAME_HZ,
        contrast_threshold=0.15,
        objects=objects,
        background_intensity=0.4,
        noise_rate=noise_rate,
        seed=seed,
    )


def despawn_scene_config(seed: int) -> SceneConfig:
    """
    A car that disappears halfway between two frames plus a steady pedestrian.

    The car despawns at 525 ms, the midpoint of the labeled interval
    [500 ms, 550 ms), so exact and interpolated ground truth disagree there.
    """
    rng = rng_stream(seed, "scene")
    duration = DURATION_US
    car_y = float(rng.uniform(4, SENSOR - CAR_SIZE[1] - 4))
    pedestrian_x = float(rng.uniform(4, SENSOR - PEDESTRIAN_SIZE[0] - 4))
    car = ObjectSpec(
        class_id=int(ObjectClass.CAR),
        size=CAR_SIZE,
        trajectory=[
            TrajectoryKnot(t=0, x=0.0, y=car_y),
            TrajectoryKnot(t=duration, x=SENSOR - CAR_SIZE[0], y=car_y),
        ],
        intensity=0.5,
        spawn_t=0,
        despawn_t=525_000,
    )
    pedestrian = ObjectSpec(
        class_id=int(ObjectClass.PEDESTRIAN),
        size=PEDESTRIAN_SIZE,
        trajectory=[
            TrajectoryKnot(t=0, x=pedestrian_x, y=4.0),
            TrajectoryKnot(t=duration, x=pedestrian_x, y=SENSOR - PEDESTRIAN_SIZE[1] - 4.0),
        ],
        intensity=-0.25,
        spawn_t=0,
        despawn_t=duration + 1,
    )
    return SceneConfig(
        sensor_w=SENSOR,
        sensor_h=SENSOR,
        duration=duration,
        frame_hz=FRAME_HZ,
        contrast_threshold=0.15,
        objects=[car, pedestrian],
        background_intensity=0.4,
        noise_rate=0.0,
        seed=seed,
    )


PRESETS = {"standard": standard_scene_config, "despawn": despawn_scene_config}
