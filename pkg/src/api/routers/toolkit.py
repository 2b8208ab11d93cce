"""
Artifact processing endpoints: voxelization, COCO evaluation and inspection.

Uploads are sent as the raw request body. Invalid artifacts are reported as
422 error envelopes by the application's exception handlers.
"""

import tempfile
from pathlib import Path
from typing import Any, Dict, Optional
import logging

from fastapi import APIRouter, Depends, Query
from pydantic import BaseModel, Field

from ...cli.artifacts import evaluate_documents, inspect_artifact, tensor_summary
from ...core.dependencies import get_logger_for_request, get_upload_body
from ...core.exceptions import ArgumentError
from ...core.models import APIResponse
from ...events.evt_format import decode_evt1
from ...events.voxel import VoxelSpec, voxelize
from ...events.windows import Window

router = APIRouter(
    tags=["Toolkit"],
    responses={
        413: {"description": "Upload too large"},
        422: {"description": "Invalid artifact or arguments"},
    }
)


class EvaluateRequest(BaseModel):
    """Detections and labels documents in the formats described under docs/formats."""

    detections: Dict[str, Any] = Field(..., description="Detections JSON document")
    labels: Dict[str, Any] = Field(..., description="Labels JSON document")


@router.post(
    "/voxelize",
    response_model=APIResponse,
    summary="Voxelize an EVT1 upload",
    description="""
    Bin the events of `[t1, t2)` into a `(2, bins, H, W)` tensor and return
    per-polarity and per-bin counts. The body is the EVT1 file itself.
    """,
)
async def voxelize_upload(
    t1: Optional[int] = Query(None, description="Window start (µs); defaults to the first event"),
    t2: Optional[int] = Query(None, description="Window end (µs); defaults past the last event"),
    bins: int = Query(5, ge=1, le=1024, description="Temporal bins"),
    body: bytes = Depends(get_upload_body),
    logger: logging.Logger = Depends(get_logger_for_request),
):
    stream = decode_evt1(body, source="upload")
    times = stream.events["t"]
    start = t1 if t1 is not None else (int(times[0]) if len(stream) else 0)
    end = t2 if t2 is not None else (int(times[-1]) + 1 if len(stream) else start + 1)
    window = Window.checked(start, end)
    tensor = voxelize(stream, window, VoxelSpec(T=bins, H=stream.sensor_h, W=stream.sensor_w))
    logger.info(f"Voxelized {tensor.total} of {len(stream)} events into {bins} bins")
    return APIResponse(success=True, message="voxelized", data=tensor_summary(tensor))


@router.post(
    "/evaluate",
    response_model=APIResponse,
    summary="COCO metrics of detections against labels",
)
async def evaluate(
    request: EvaluateRequest,
    logger: logging.Logger = Depends(get_logger_for_request),
):
    bundle = evaluate_documents(request.detections, request.labels)
    logger.info(f"Evaluated detections: mAP={bundle.map}")
    return APIResponse(success=True, message="evaluated", data=bundle.model_dump())


@router.post(
    "/inspect",
    response_model=APIResponse,
    summary="Summarise an artifact upload",
    description="The file name decides how JSON-family artifacts are recognised (`.json`, `.jsonl`, `.csv`).",
)
async def inspect_upload(
    filename: str = Query(..., min_length=1, description="Original file name"),
    body: bytes = Depends(get_upload_body),
):
    name = Path(filename).name
    if not name or name in (".", ".."):
        raise ArgumentError(f"invalid file name '{filename}'", field="filename")
    with tempfile.TemporaryDirectory() as workdir:
        target = Path(workdir) / name
        target.write_bytes(body)
        summary = inspect_artifact(target)
    summary["path"] = name
    return APIResponse(success=True, message=f"parsed {summary['kind']}", data=summary)
