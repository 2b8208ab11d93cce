"""
Model checkpoints (float64 values + JSON sidecar holding the ``ModelSpec``).
"""

from pathlib import Path
from typing import Union

from pydantic import ValidationError

from ..core.checkpoint import load_tensors, save_tensors
from ..core.exceptions import ArgumentError, DataError
from ..core.logging import get_logger
from .model import ModelSpec, ToyModel

logger = get_logger(__name__)

MODEL_KIND = "toy_detector"


def save_model(path: Union[str, Path], model: ToyModel) -> Path:
    """Write ``model`` to ``path`` (``.bin``) and its sidecar (``.json``)."""
    target = save_tensors(path, MODEL_KIND, model.params, {"spec": model.spec.model_dump(mode="json")})
    logger.info(f"Saved model ({model.parameter_count} values) to {target}")
    return target


def load_model(path: Union[str, Path]) -> ToyModel:
    """
    Read a model checkpoint.

    Parameters come back in the dtype recorded by the spec.

    Raises:
        DataError: On a malformed sidecar or parameters that do not match
            the recorded architecture
    """
    tensors, meta = load_tensors(path, MODEL_KIND)
    try:
        spec = ModelSpec.model_validate(meta["spec"])
    except (KeyError, ValidationError) as exc:
        raise DataError(f"invalid model spec: {exc}", path=str(path), field="meta.spec") from exc
    params = {name: value.astype(spec.dtype) for name, value in tensors.items()}
    try:
        return ToyModel(spec, params)
    except ArgumentError as exc:
        raise DataError(exc.detail, path=str(path), field=exc.field) from exc
