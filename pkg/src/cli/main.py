"""
``flexevent`` command line.

Subcommands::

    synth-gen   scene -> EVT1 events, PGM frames, labels JSON, scene JSON
    voxelize    EVT1 -> tensor NPZ (--t1/--t2/--bins)
    train       low-frequency sparse training from an experiment file
    flextune    self-training rounds, pseudo-label dump
    eval        frequency sweep -> metrics CSV + plot JSON
    bench       voxelization throughput (median of >= 5 runs)
    inspect     summarise any artifact file

Exit codes: 0 on success, 1 on a usage error, 2 on a data error.
"""

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ..core.config import settings
from ..core.exceptions import ArgumentError, ConfigurationError, DataError, FlexEventError, UsageError
from ..core.logging import get_logger, setup_logging
from ..core.seeding import rng_stream
from ..core.storage import atomic_write_json, atomic_write_text
from ..detector.checkpoint import load_model, save_model
from ..detector.model import DetectMode, ToyModel
from ..evaluation.sweep import GTMode, default_offsets, frequency_sweep, offsets_for_frequencies
from ..events.evt_format import read_evt1, write_evt1
from ..events.stream import EVENT_DTYPE, EventStream
from ..events.voxel import VoxelSpec, voxelize
from ..events.windows import Window
from ..flextune.dataset import build_dataset
from ..flextune.self_training import self_train
from ..flextune.training import fit_sparse
from ..synth.presets import PRESETS
from ..synth.scene import generate_scene
from .artifacts import inspect_artifact, save_labels, save_pseudo_labels, save_tensor, write_pgm
from .experiment import ExperimentConfig, load_experiment, load_scene_config, save_scene_config

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

MODEL_FILE = "model.bin"
TUNED_MODEL_FILE = "model_tuned.bin"


class ToolkitArgumentParser(argparse.ArgumentParser):
    """Raises ``UsageError`` instead of exiting on bad arguments."""

    def error(self, message: str):
        raise UsageError(message, usage=self.format_usage())


def parse_frequencies(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise UsageError(f"--freqs expects comma-separated numbers, got '{text}'") from exc
    if not values:
        raise UsageError("--freqs needs at least one frequency")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise UsageError("--freqs must be strictly increasing")
    return values


def build_parser() -> ToolkitArgumentParser:
    parser = ToolkitArgumentParser(
        prog="flexevent",
        description="Event-frame detection toolkit: synthesis, training, FlexTune and multi-frequency evaluation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", parser_class=ToolkitArgumentParser)

    gen = sub.add_parser("synth-gen", help="Generate a synthetic scene")
    source = gen.add_mutually_exclusive_group()
    source.add_argument("--config", help="Scene config JSON")
    source.add_argument("--preset", choices=sorted(PRESETS), default="standard")
    gen.add_argument("--seed", type=int, default=0, help="Preset seed")
    gen.add_argument("--out", required=True, help="Output directory")

    vox = sub.add_parser("voxelize", help="Voxelize an EVT1 file")
    vox.add_argument("events", help="EVT1 file")
    vox.add_argument("--t1", type=int, default=None, help="Window start (µs); defaults to the first event")
    vox.add_argument("--t2", type=int, default=None, help="Window end (µs); defaults past the last event")
    vox.add_argument("--bins", type=int, default=5, help="Temporal bins")
    vox.add_argument("--out", required=True, help="Tensor NPZ path")

    for name, text in (("train", "Low-frequency sparse training"), ("flextune", "FlexTune self-training")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="Experiment JSON")
        if name == "flextune":
            cmd.add_argument("--model", default=None, help=f"Checkpoint to tune (default <output_dir>/{MODEL_FILE})")

    ev = sub.add_parser("eval", help="Multi-frequency evaluation")
    ev.add_argument("--config", required=True, help="Experiment JSON")
    ev.add_argument("--model", default=None, help="Checkpoint (default: tuned model if present, else trained)")
    ev.add_argument("--freqs", type=parse_frequencies, default=None, help="e.g. 20,36,45,60,90,180")
    ev.add_argument("--gt-mode", choices=[m.value for m in GTMode], default=None)
    ev.add_argument("--mode", choices=[m.value for m in DetectMode], default=None)
    ev.add_argument("--out", default=None, help="Output directory (default: experiment output_dir)")

    bench = sub.add_parser("bench", help="Voxelization throughput")
    bench.add_argument("--events", type=int, default=settings.bench_events)
    bench.add_argument("--runs", type=int, default=settings.bench_runs)
    bench.add_argument("--bins", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", default=None, help="Also write the report to this JSON file")

    insp = sub.add_parser("inspect", help="Summarise artifact files")
    insp.add_argument("paths", nargs="+")
    return parser


def _emit(document) -> None:
    sys.stdout.write(json.dumps(document, indent=2, sort_keys=True, default=str) + "\n")


def cmd_synth_gen(args) -> int:
    config = load_scene_config(args.config) if args.config else PRESETS[args.preset](args.seed)
    scene = generate_scene(config)
    out = Path(args.out)
    save_scene_config(out / "scene.json", config)
    write_evt1(out / "events.evt1", scene.events)
    for t, image in scene.frames:
        write_pgm(out / "frames" / f"frame_{int(t):09d}.pgm", image)
    save_labels(out / "labels.json", dict(scene.frame_labels()))
    logger.info(f"Scene written to {out}")
    _emit({"out": str(out), "events": len(scene.events), "frames": len(scene.frames)})
    return EXIT_OK


def cmd_voxelize(args) -> int:
    if args.bins < 1:
        raise UsageError("--bins must be positive")
    stream = read_evt1(args.events)
    times = stream.events["t"]
    t1 = args.t1 if args.t1 is not None else (int(times[0]) if len(stream) else 0)
    t2 = args.t2 if args.t2 is not None else (int(times[-1]) + 1 if len(stream) else t1 + 1)
    window = Window.checked(t1, t2)
    tensor = voxelize(stream, window, VoxelSpec(T=args.bins, H=stream.sensor_h, W=stream.sensor_w))
    save_tensor(args.out, tensor)
    _emit({"out": args.out, "shape": list(tensor.data.shape), "t1": t1, "t2": t2, "total": tensor.total})
    return EXIT_OK


def _prepare(config: ExperimentConfig):
    scene_config = load_scene_config(config.scene_path)
    config.check_scene(scene_config)
    scene = generate_scene(scene_config)
    return scene, build_dataset(scene, config.frequency, sequence_id=config.scene_path.stem)


def _records_csv(records) -> str:
    rows = [record.model_dump() for record in records]
    buffer = io.StringIO()
    if rows:
        writer = csv.DictWriter(buffer, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buffer.getvalue()


def cmd_train(args) -> int:
    config = load_experiment(args.config)
    _, dataset = _prepare(config)
    model = ToyModel.initialize(config.model_spec(), seed=config.training.seed)
    model, history = fit_sparse(model, dataset, config.training)
    out = config.output_path
    save_model(out / MODEL_FILE, model)
    atomic_write_text(out / "train_history.csv", _records_csv(history))
    _emit({"model": str(out / MODEL_FILE), "epochs": len(history), "final_loss": history[-1].mean_loss if history else None})
    return EXIT_OK


def cmd_flextune(args) -> int:
    config = load_experiment(args.config)
    _, dataset = _prepare(config)
    out = config.output_path
    model = load_model(args.model or out / MODEL_FILE)
    result = self_train(model, dataset, config.tune, config.training)
    save_model(out / TUNED_MODEL_FILE, result.model)
    save_pseudo_labels(out / "pseudo_labels.jsonl", result.pseudo_labels)
    atomic_write_text(out / "flextune_rounds.csv", _records_csv(result.rounds))
    _emit({"model": str(out / TUNED_MODEL_FILE), "rounds": [r.model_dump() for r in result.rounds]})
    return EXIT_OK


def cmd_eval(args) -> int:
    config = load_experiment(args.config)
    scene, _ = _prepare(config)
    out = Path(args.out) if args.out else config.output_path
    model_path = args.model
    if model_path is None:
        tuned = config.output_path / TUNED_MODEL_FILE
        model_path = tuned if tuned.exists() else config.output_path / MODEL_FILE
    model = load_model(model_path)

    period = scene.config.frame_period_us
    freqs = args.freqs if args.freqs is not None else (config.evaluation.freqs or None)
    if freqs:
        offsets = offsets_for_frequencies(freqs, period)
    else:
        offsets = default_offsets(config.evaluation.n)
    sweep = frequency_sweep(
        model,
        scene,
        offsets,
        gt_mode=GTMode(args.gt_mode) if args.gt_mode else config.evaluation.gt_mode,
        bins=config.voxel.T,
        mode=DetectMode(args.mode) if args.mode else config.eval_mode,
        nominal_hz=freqs,
    )
    table = sweep.to_csv()
    atomic_write_text(out / "metrics.csv", table)
    atomic_write_json(out / "plot.json", sweep.plot_data())
    sys.stdout.write(table)
    return EXIT_OK


def run_bench(events: int, runs: int, bins: int, seed: int, sensor=(640, 480)) -> dict:
    """Median voxelization throughput over ``runs`` repetitions."""
    if runs < 5:
        raise ArgumentError(f"bench needs at least 5 runs, got {runs}", field="runs")
    if events < 1:
        raise ArgumentError("bench needs at least one event", field="events")
    rng = rng_stream(seed, "noise")
    width, height = sensor
    raw = np.zeros(events, dtype=EVENT_DTYPE)
    raw["x"] = rng.integers(0, width, events)
    raw["y"] = rng.integers(0, height, events)
    raw["t"] = np.sort(rng.integers(0, 1_000_000, events))
    raw["p"] = rng.choice(np.array([-1, 1], dtype=np.int8), events)
    stream = EventStream(raw, width, height)
    window = Window(t1=0, t2=1_000_000)
    spec = VoxelSpec(T=bins, H=height, W=width)
    seconds = []
    for _ in range(runs):
        start = time.perf_counter()
        voxelize(stream, window, spec)
        seconds.append(time.perf_counter() - start)
    median = float(np.median(seconds))
    return {
        "benchmark": "voxelize",
        "events": events,
        "runs": runs,
        "bins": bins,
        "sensor": [width, height],
        "seconds": seconds,
        "median_seconds": median,
        "events_per_second": events / median if median > 0 else None,
    }


def cmd_bench(args) -> int:
    report = run_bench(args.events, args.runs, args.bins, args.seed)
    logger.info(f"Voxelization: {report['events_per_second']:.3g} events/s (median of {report['runs']} runs)")
    if args.out:
        atomic_write_json(args.out, report)
    _emit(report)
    return EXIT_OK


def cmd_inspect(args) -> int:
    summaries = [inspect_artifact(path) for path in args.paths]
    _emit(summaries[0] if len(summaries) == 1 else summaries)
    return EXIT_OK


COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "voxelize": cmd_voxelize,
    "train": cmd_train,
    "flextune": cmd_flextune,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "inspect": cmd_inspect,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse ``argv`` and run one subcommand.

    Returns:
        Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        setup_logging(log_level=args.log_level, enable_file=False)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        sys.stderr.write(parser.format_usage())
        sys.stderr.write(f"flexevent: error: {exc.detail}\n")
        return EXIT_USAGE
    except (DataError, ArgumentError, ConfigurationError) as exc:
        logger.error(f"{exc.__class__.__name__}: {exc}")
        return EXIT_DATA
    except FileNotFoundError as exc:
        logger.error(f"File not found: {exc.filename}")
        return EXIT_DATA
    except FlexEventError as exc:
        logger.error(f"{exc.__class__.__name__}: {exc}", extra={"context": exc.context})
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
