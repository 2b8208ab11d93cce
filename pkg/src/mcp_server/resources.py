"""
MCP resources describing the toolkit's artifact formats and scene presets.
"""

from fastmcp import FastMCP

from ..cli.artifacts import DETECTIONS_FORMAT, LABELS_FORMAT, PGM_SCALE, PSEUDO_FORMAT, SCHEMA_VERSION
from ..events.evt_format import HEADER, RECORD_SIZE
from ..synth.presets import PRESETS

FORMATS_OVERVIEW = f"""
ARTIFACT FORMATS
================
EVT1 events     16-byte header "EVT1", u16 width, u16 height, u32 count, u32 reserved,
                then {RECORD_SIZE}-byte records (u16 x, u16 y, i64 t in µs, i8 p in {{-1, +1}}),
                little-endian, sorted by t. Header size: {HEADER.size} bytes.
PGM frames      binary P5, 16-bit big-endian, value = round(intensity * {PGM_SCALE:g}).
Tensor NPZ      arrays "data" (int64, shape (2, T, H, W); channel 1 = positive polarity)
                and "window" ([t1, t2] in µs).
Labels JSON     {{"format": "{LABELS_FORMAT}", "schema_version": {SCHEMA_VERSION},
                 "labels": [{{"t": µs, "boxes": [{{x_min, y_min, x_max, y_max, class_id, track_id}}]}}]}}
Detections JSON {{"format": "{DETECTIONS_FORMAT}", "schema_version": {SCHEMA_VERSION},
                 "detections": [{{"t": µs, "boxes": [{{x_min, y_min, x_max, y_max, class_id, score}}]}}]}}
Pseudo-labels   JSONL, one object per refined sub-window: {{"sequence_id", "window": [t1, t2],
                 "labels": [{{"box": [x_min, y_min, x_max, y_max], class_id, track_id}}],
                 "format": "{PSEUDO_FORMAT}", "interval", "window_index", "scores"}}.
Checkpoint      flat float64 "*.bin" plus a "*.json" sidecar (format_version, kind, tensors, meta).
Metrics CSV     frequency_hz, offset, map, ap50, ap75, ap_s, ap_m, ap_l, ap_class_<id>...;
                undefined metrics are empty cells.
Golden examples live under docs/formats.
""".strip()


def register_resources(mcp: FastMCP):
    """Register all MCP resources."""

    @mcp.resource("formats://artifacts")
    async def get_formats_resource() -> str:
        """Layout of every artifact file the toolkit reads and writes."""
        return FORMATS_OVERVIEW

    @mcp.resource("presets://scenes")
    async def get_presets_resource() -> str:
        """Synthetic scene presets and their objects."""
        lines = ["SCENE PRESETS", "============="]
        for name, factory in sorted(PRESETS.items()):
            config = factory(0)
            lines.append(
                f"{name}: {config.sensor_w}x{config.sensor_h} sensor, {config.duration} µs, "
                f"{config.frame_hz:g} Hz frames, noise {config.noise_rate:g} ev/px/s"
            )
            for index, obj in enumerate(config.objects):
                lines.append(
                    f"  object {index}: class {obj.class_id}, size {obj.size[0]:g}x{obj.size[1]:g}, "
                    f"alive [{obj.spawn_t}, {obj.despawn_t}) µs"
                )
        return "\n".join(lines)
