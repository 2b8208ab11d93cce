"""
Named random sub-streams derived from a single experiment seed.

Each component draws from its own stream (``scene``, ``noise``, ``init``,
``training``, ``sampling``) so that re-running one component in isolation
reproduces exactly the numbers it produced inside the full pipeline.
"""

import zlib

import numpy as np

STREAM_NAMES = ("scene", "noise", "init", "training", "sampling")


def stream_key(name: str) -> int:
    """Stable integer key for a stream name."""
    return zlib.crc32(name.encode("utf-8"))


def rng_stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """
    Get the generator for a named sub-stream of ``seed``.

    Args:
        seed: Experiment seed (non-negative integer)
        name: Stream name, e.g. ``"training"``
        *extra: Further integers appended to the spawn key (round index,
            sample index, ...)

    Returns:
        A fresh ``numpy.random.Generator``; identical arguments always yield
        identical draws.
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=(stream_key(name), *map(int, extra)))
    return np.random.default_rng(sequence)
