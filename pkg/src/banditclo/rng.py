"""Labelled random streams derived from a single root seed."""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"integer stream labels must be nonnegative, got {label}")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def seed_sequence(root_seed: int, *labels) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(root_seed), spawn_key=tuple(_label_key(x) for x in labels))


def stream(root_seed: int, *labels) -> np.random.Generator:
    """Generator for the purpose named by ``labels``.

    The same ``(root_seed, *labels)`` always yields the same stream, and
    streams with different labels are statistically independent.
    """
    return np.random.default_rng(seed_sequence(root_seed, *labels))


def derived_seed(root_seed: int, *labels) -> int:
    """A 63-bit integer summarising the stream, handy for logging."""
    return int(seed_sequence(root_seed, *labels).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
