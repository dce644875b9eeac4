"""Counter-based random streams: one stream per (master seed, sample index)."""

from __future__ import annotations

import numpy as np


def stream(master_seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for sample ``index``.

    The stream depends only on the pair, never on how samples are batched or
    distributed over workers.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))
