"""Named random streams fanned out from one master seed.

Every consumer (env generation, episode sampling, parameter init, DAgger
sampling, evaluation) draws from its own stream, so toggling one consumer
never perturbs another. Streams are derived functionally: stream(seed,
"dagger", step, i) is reproducible without carrying mutable RNG state
through checkpoints.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(master_seed: int, name: str, *indices: int) -> np.random.Generator:
    """Return the generator for a named stream at the given indices."""
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=key))
