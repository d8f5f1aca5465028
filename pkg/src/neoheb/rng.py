"""Deterministic random streams.

Every stream is a Philox-4x64 counter-based generator (numpy
``np.random.Philox``) keyed by a ``SeedSequence`` built from the master
seed and a tuple of integers/strings naming the stream.  Strings are hashed
with CRC-32 so the key is identical on every platform.
"""

from __future__ import annotations

import zlib

import numpy as np


def _word(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def seed_sequence(master: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(_word(p) for p in path))


def stream(master: int, *path) -> np.random.Generator:
    """Generator for the named sub-stream of ``master``."""
    return np.random.Generator(np.random.Philox(seed_sequence(master, *path)))


def derive_seed(master: int, *path) -> int:
    """64-bit integer seed for a sub-run (stable across platforms)."""
    return int(seed_sequence(master, *path).generate_state(1, dtype=np.uint64)[0])
