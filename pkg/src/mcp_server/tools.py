"""
MCP tools exposing the toolkit to LLM clients.

Each tool is a plain coroutine returning a JSON-serialisable dict; toolkit
errors are reported in the result (``{"error": ..., "context": ...}``)
rather than raised, so a client can correct its arguments and retry.
"""

from functools import wraps
from typing import Any, Dict, Optional

from fastmcp import FastMCP

from ..cli import artifacts
from ..core.exceptions import FlexEventError
from ..core.logging import get_logger
from ..evaluation.coco import coco_map
from ..events.evt_format import read_evt1
from ..events.voxel import VoxelSpec, voxelize
from ..events.windows import Window
from ..synth.presets import PRESETS
from ..synth.scene import generate_scene

logger = get_logger(__name__)


def _reports_errors(fn):
    @wraps(fn)
    async def wrapper(*args, **kwargs) -> Dict[str, Any]:
        try:
            return await fn(*args, **kwargs)
        except FlexEventError as exc:
            logger.warning(f"Tool {fn.__name__} failed: {exc.detail}")
            return {"error": exc.detail, "type": exc.__class__.__name__, "context": exc.context}
        except FileNotFoundError as exc:
            return {"error": f"file not found: {exc.filename}", "type": "FileNotFoundError"}
    return wrapper


@_reports_errors
async def inspect_artifact(path: str) -> Dict[str, Any]:
    """
    Parse an artifact file (EVT1, PGM, tensor, checkpoint, labels,
    detections, pseudo-labels, experiment, scene or metrics CSV) and
    summarise it.

    Args:
        path: File path on the server
    """
    return artifacts.inspect_artifact(path)


@_reports_errors
async def evaluate_detections(detections_path: str, labels_path: str) -> Dict[str, Any]:
    """
    COCO metrics (mAP, AP50, AP75, AP_S/M/L, per class) of a detections
    file against a labels file.

    Args:
        detections_path: Detections JSON
        labels_path: Labels JSON
    """
    bundle = coco_map(artifacts.load_detections(detections_path), artifacts.load_labels(labels_path))
    return bundle.model_dump()


@_reports_errors
async def voxelize_file(
    path: str,
    bins: int = 5,
    t1: Optional[int] = None,
    t2: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Voxelize the events of an EVT1 file over ``[t1, t2)``.

    Args:
        path: EVT1 file
        bins: Temporal bins
        t1: Window start (µs); defaults to the first event
        t2: Window end (µs); defaults past the last event
    """
    stream = read_evt1(path)
    times = stream.events["t"]
    start = t1 if t1 is not None else (int(times[0]) if len(stream) else 0)
    end = t2 if t2 is not None else (int(times[-1]) + 1 if len(stream) else start + 1)
    spec = VoxelSpec(T=bins, H=stream.sensor_h, W=stream.sensor_w)
    tensor = voxelize(stream, Window.checked(start, end), spec)
    return {"path": path, "events": len(stream), **artifacts.tensor_summary(tensor)}


@_reports_errors
async def generate_scene_summary(preset: str = "standard", seed: int = 0) -> Dict[str, Any]:
    """
    Generate a synthetic scene in memory and describe it.

    Args:
        preset: ``standard`` or ``despawn``
        seed: Scene seed
    """
    if preset not in PRESETS:
        return {"error": f"unknown preset '{preset}'", "presets": sorted(PRESETS)}
    config = PRESETS[preset](seed)
    scene = generate_scene(config)
    labels = scene.frame_labels()
    return {
        "preset": preset,
        "seed": seed,
        "sensor": [config.sensor_w, config.sensor_h],
        "duration_us": config.duration,
        "frame_hz": config.frame_hz,
        "events": len(scene.events),
        "frames": len(scene.frames),
        "objects": [
            {"class_id": obj.class_id, "size": list(obj.size), "spawn_t": obj.spawn_t, "despawn_t": obj.despawn_t}
            for obj in config.objects
        ],
        "boxes_per_frame": [len(boxes) for _, boxes in labels],
    }


TOOLS = (inspect_artifact, evaluate_detections, voxelize_file, generate_scene_summary)


def register_tools(mcp: FastMCP):
    """
    Register all toolkit tools with the server.

    Args:
        mcp: FastMCP server instance to register tools with
    """
    logger.info("Registering MCP tools")
    for tool in TOOLS:
        mcp.tool()(tool)
    logger.info(f"Registered {len(TOOLS)} MCP tools: {', '.join(t.__name__ for t in TOOLS)}")
