"""Seeded random streams.

All randomness in the package flows through one 64-bit run seed. Stage
streams are derived with named substreams so that adding a stage never
shifts the draws of another, and parallel work per sample can derive
its own child stream from (seed, stage, index).
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, *names) -> np.random.Generator:
    """Return an independent generator for (seed, *names).

    Names may be strings or ints; strings are folded through crc32 so the
    derivation is stable across runs and platforms. Identical arguments
    always yield an identical stream.
    """
    key = tuple(
        zlib.crc32(n.encode()) if isinstance(n, str) else int(n) for n in names
    )
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gumbel(0, 1) noise computed from uniforms.

    Uses the inverse-CDF form -log(-log(u)) with u in the open interval,
    so every draw is finite.
    """
    u = rng.random(shape)
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    return -np.log(-np.log(u))
