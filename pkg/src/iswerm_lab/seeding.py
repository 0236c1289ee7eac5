"""Deterministic seed derivation for multi-stage, replicated experiments.

Every random draw in the library flows through a generator built by
:func:`stage_rng`, which derives a child stream from
``(master_seed, replication_index, stage_tag)``.  The derivation is a pure
function of those three values, so any stage of any replication can be
re-run in isolation and produce the same stream, regardless of execution
order or parallelism.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stage_seed", "stage_rng"]


def stage_seed(master_seed: int, rep: int, stage: str) -> np.random.SeedSequence:
    """Derive the seed for one stage of one replication.

    Parameters
    ----------
    master_seed : int
        Experiment-level seed.
    rep : int
        Replication index (0-based).
    stage : str
        Free-form stage tag, e.g. ``"collect:T=1024"`` or ``"test"``.
        Hashed with CRC-32 so the tag's content, not its identity, drives
        the stream.
    """
    if master_seed < 0 or rep < 0:
        raise ValueError("master_seed and rep must be non-negative")
    tag = zlib.crc32(stage.encode("utf-8"))
    return np.random.SeedSequence([master_seed, rep, tag])


def stage_rng(master_seed: int, rep: int, stage: str) -> np.random.Generator:
    """Generator for one (master seed, replication, stage) triple."""
    return np.random.default_rng(stage_seed(master_seed, rep, stage))
