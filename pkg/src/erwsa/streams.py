"""Reproducible per-replicate random streams.

Replicate ``r`` of an experiment with master seed ``s`` always receives the
streams spawned from ``SeedSequence(s, spawn_key=(r,))``, whatever the worker
count or chunking.  Child 0 drives the direction mechanics, child 1 the step
sizes, so swapping the step-size law leaves the direction path unchanged.
"""
from __future__ import annotations

import numpy as np

DIRECTION, STEP_SIZE = 0, 1


def replicate_seed(seed: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))


def replicate_stream(seed: int, replicate: int, role: int = DIRECTION) -> np.random.Generator:
    """One child stream of a replicate; identical to ``replicate_seed(...).spawn(2)[role]``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(role)))
    return np.random.Generator(np.random.PCG64(ss))


def replicate_streams(seed: int, replicate: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(direction stream, step-size stream) for one replicate."""
    return replicate_stream(seed, replicate, DIRECTION), replicate_stream(seed, replicate, STEP_SIZE)


def block_stream(seed: int, block: int, tag: int = 0) -> np.random.Generator:
    """Stream for a fixed-size block of independent trials (Gaussian/small-ball work)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def chunks(total: int, size: int) -> list[tuple[int, int]]:
    """Fixed [start, stop) chunks; independent of the number of workers."""
    return [(a, min(a + size, total)) for a in range(0, total, size)]
