"""Deterministic RNG substreams.

Every stochastic entry point takes an explicit master seed.  Work items
(samples, bank entries, stream indices) draw from a substream derived from
``(master_seed, index)``, never from a shared generator, so results are
identical for any worker count and any execution order.
"""

from __future__ import annotations

import numpy as np


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Generator for work item ``index`` under ``master_seed``.

    Uses ``SeedSequence`` spawn keys, which are stable across platforms and
    numpy versions.
    """
    if master_seed < 0 or index < 0:
        raise ValueError("master_seed and index must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def root_rng(master_seed: int) -> np.random.Generator:
    """Generator for single-stream use (equivalent to ``substream(seed, 0)``)."""
    return substream(master_seed, 0)
