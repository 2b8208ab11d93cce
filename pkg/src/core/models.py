"""
Shared Pydantic models used across the library, the CLI and the services.
"""

from datetime import datetime
from enum import Enum
from typing import Any, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

Box = Tuple[float, float, float, float]


class ObjectClass(int, Enum):
    """Synthetic object classes."""
    CAR = 0
    PEDESTRIAN = 1


def box_area(box: Box) -> float:
    """Area of an (x_min, y_min, x_max, y_max) box."""
    return max(0.0, box[2] - box[0]) * max(0.0, box[3] - box[1])


class GroundTruthBox(BaseModel):
    """Labelled object box with a stable track identity."""
    model_config = ConfigDict(frozen=True)

    box: Box = Field(..., description="(x_min, y_min, x_max, y_max) in pixels")
    class_id: int = Field(..., ge=0, description="Object class")
    track_id: int = Field(..., ge=0, description="Stable identity across timestamps")

    @model_validator(mode="after")
    def check_area(self):
        x_min, y_min, x_max, y_max = self.box
        if not x_min < x_max:
            raise ValueError("x_min must be smaller than x_max")
        if not y_min < y_max:
            raise ValueError("y_min must be smaller than y_max")
        return self

    @property
    def area(self) -> float:
        return box_area(self.box)


class Detection(BaseModel):
    """Scored class box emitted by a detector at timestamp ``t``."""
    model_config = ConfigDict(frozen=True)

    box: Box = Field(..., description="(x_min, y_min, x_max, y_max) in pixels")
    class_id: int = Field(..., ge=0, description="Predicted class")
    score: float = Field(..., ge=0.0, le=1.0, description="Confidence")
    t: int = Field(0, description="Timestamp in microseconds")

    @model_validator(mode="after")
    def check_box(self):
        x_min, y_min, x_max, y_max = self.box
        if not (x_min < x_max and y_min < y_max):
            raise ValueError("detection box must have positive width and height")
        return self

    @property
    def area(self) -> float:
        return box_area(self.box)

    def tie_break(self) -> Tuple[float, float, float, float, int]:
        """Deterministic secondary ordering: box corners then class."""
        return (*self.box, self.class_id)

    def rank_key(self) -> Tuple[float, float, float, float, float, int]:
        """Sort key: score descending, then ``tie_break`` ascending."""
        return (-self.score, *self.tie_break())


class HealthCheck(BaseModel):
    """Health check response model."""
    status: str = Field(..., description="Service status")
    service: str = Field(..., description="Service name")
    version: str = Field(..., description="Service version")
    timestamp: datetime = Field(..., description="Health check timestamp")
    dependencies: Optional[dict] = Field(None, description="Dependencies status")


class APIResponse(BaseModel):
    """Standard API response model."""
    success: bool = Field(..., description="Operation success status")
    message: str = Field(..., description="Response message")
    data: Optional[Any] = Field(None, description="Response data")
    errors: Optional[List[str]] = Field(None, description="Error messages")
