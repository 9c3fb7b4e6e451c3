"""Shared numerics, error types and random-stream plumbing."""
from __future__ import annotations

import os

import numpy as np

LOG2 = float(np.log(2.0))

# Stream ids for the (seed, stream-id, ...) splitting rule. Every random
# consumer draws from ``rng_stream(seed, STREAM_*, ...)`` so components can be
# reproduced independently of each other.
STREAM_TEACHER = 0
STREAM_GIBBS = 1
STREAM_NOISE = 2
STREAM_CHECKS = 3


class CapacityError(ValueError):
    """An exact enumeration was requested beyond its configured size cap."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Uses ``SeedSequence(seed, spawn_key=keys)``, so distinct key tuples give
    statistically independent streams and the same tuple always gives the
    same stream.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def logcosh(x):
    """Overflow-free ``log(cosh(x))``."""
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x)) - LOG2


def thread_count(threads: int | None = None) -> int:
    """Worker count: explicit value, else ``BINRBM_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("BINRBM_THREADS", "").strip()
        threads = int(env) if env else 1
    return max(1, int(threads))
