"""
Experiment documents.

An experiment is one JSON file holding every setting of a run::

    {
      "schema_version": 1,
      "scene": "scene.json",
      "voxel": {"T": 5, "H": 64, "W": 64},
      "frequency": {"base_hz": 20, "high_hz": 180, "ratio": 9},
      "fusion": {"mode": "gated", "lambda_reg": 0.01, ...},
      "model": {"c1": 8, "c2": 16, "hidden": 32, "dtype": "float32"},
      "tune": {...},
      "training": {"lr": 0.02, "epochs": 30, "seed": 7, ...},
      "evaluation": {"freqs": [20, 36, 45, 60, 90, 180], "gt_mode": "exact"},
      "output_dir": "runs/standard"
    }

Relative paths are resolved against the experiment file's directory. The
seed in ``training`` is mandatory; nothing in a run draws wall-clock entropy.
"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..core.exceptions import ConfigurationError, DataError
from ..core.storage import atomic_write_json
from ..detector.model import DetectMode, ModelSpec
from ..evaluation.sweep import GTMode
from ..events.voxel import VoxelSpec
from ..events.windows import FrequencyPlan
from ..flextune.calibration import TuneConfig
from ..flextune.training import TrainingParams
from ..fusion.block import FusionMode
from ..synth.scene import SceneConfig

SCHEMA_VERSION = 1


class FusionSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: FusionMode = FusionMode.GATED
    lambda_reg: float = Field(0.01, ge=0)
    gate_noise: bool = True
    noise_per_map: bool = False
    sigma_init: float = Field(0.1, ge=0)


class ModelSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    c1: int = Field(8, ge=1)
    c2: int = Field(16, ge=1)
    hidden: int = Field(32, ge=1)
    dtype: Literal["float32", "float64"] = "float32"


class EvaluationSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    freqs: List[float] = Field(
        default_factory=lambda: [20.0, 36.0, 45.0, 60.0, 90.0, 180.0],
        description="Evaluation frequencies; empty means the offsets i/n",
    )
    n: int = Field(10, ge=1, description="Offset count when freqs is empty")
    gt_mode: GTMode = GTMode.EXACT
    mode: Optional[DetectMode] = Field(None, description="Defaults to the training mode")

    @field_validator("freqs")
    @classmethod
    def check_increasing(cls, value):
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("freqs must be strictly increasing")
        return value


class ExperimentConfig(BaseModel):
    """Everything a ``train`` / ``flextune`` / ``eval`` run needs."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    scene: str = Field(..., description="Scene config JSON, relative to this file")
    voxel: VoxelSpec
    frequency: FrequencyPlan
    fusion: FusionSection = Field(default_factory=FusionSection)
    model: ModelSection = Field(default_factory=ModelSection)
    tune: TuneConfig = Field(default_factory=TuneConfig)
    training: TrainingParams
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)
    output_dir: str = "runs/experiment"
    base_dir: Optional[str] = Field(None, exclude=True, description="Directory relative paths resolve against")

    def resolve(self, value: Union[str, Path]) -> Path:
        path = Path(value)
        if path.is_absolute() or self.base_dir is None:
            return path
        return Path(self.base_dir) / path

    @property
    def scene_path(self) -> Path:
        return self.resolve(self.scene)

    @property
    def output_path(self) -> Path:
        return self.resolve(self.output_dir)

    @property
    def eval_mode(self) -> DetectMode:
        return self.evaluation.mode or self.training.mode

    def model_spec(self, num_classes: int = 2) -> ModelSpec:
        return ModelSpec(
            bins=self.voxel.T,
            height=self.voxel.H,
            width=self.voxel.W,
            num_classes=num_classes,
            c1=self.model.c1,
            c2=self.model.c2,
            hidden=self.model.hidden,
            fusion_mode=self.fusion.mode,
            lambda_reg=self.fusion.lambda_reg,
            gate_noise=self.fusion.gate_noise,
            noise_per_map=self.fusion.noise_per_map,
            sigma_init=self.fusion.sigma_init,
            dtype=self.model.dtype,
        )

    def check_scene(self, scene: SceneConfig) -> None:
        """
        Raises:
            ConfigurationError: If the voxel size or base frequency disagrees
                with the scene
        """
        if (self.voxel.H, self.voxel.W) != (scene.sensor_h, scene.sensor_w):
            raise ConfigurationError(
                f"voxel size {self.voxel.H}x{self.voxel.W} differs from the sensor "
                f"{scene.sensor_h}x{scene.sensor_w}",
                config_key="voxel",
            )
        if abs(self.frequency.base_hz - scene.frame_hz) > 1e-9:
            raise ConfigurationError(
                f"base_hz {self.frequency.base_hz} differs from the scene frame rate {scene.frame_hz}",
                config_key="frequency",
            )


def _load_model(model_cls, path: Union[str, Path], **extra):
    source = Path(path)
    try:
        document = json.loads(source.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError("file not found", path=str(source)) from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg} at line {exc.lineno}", path=str(source)) from exc
    if not isinstance(document, dict):
        raise DataError("top level must be an object", path=str(source))
    try:
        return model_cls.model_validate({**document, **extra})
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or None
        raise DataError(error["msg"], path=str(source), field=field) from exc


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """
    Parse and validate an experiment file.

    Raises:
        DataError: On invalid JSON or a schema violation (field named)
    """
    return _load_model(ExperimentConfig, path, base_dir=str(Path(path).resolve().parent))


def save_experiment(path: Union[str, Path], config: ExperimentConfig) -> Path:
    return atomic_write_json(path, config.model_dump(mode="json"))


def load_scene_config(path: Union[str, Path]) -> SceneConfig:
    return _load_model(SceneConfig, path)


def save_scene_config(path: Union[str, Path], config: SceneConfig) -> Path:
    return atomic_write_json(path, config.model_dump(mode="json"))
