"""Deterministic counter-based random substreams.

Every stochastic component draws from its own named Philox substream keyed by
(seed, labels), so results do not depend on the order in which components run
and distinct stages can execute concurrently without sharing generator state.
"""
from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, *labels: object) -> np.random.Generator:
    """Return a generator keyed by ``seed`` and a label path.

    The key is derived via SHA-256 so it is stable across platforms and
    numpy versions; Philox is counter-based, so draws from one substream
    never perturb another.
    """
    payload = ":".join([str(int(seed)), *map(str, labels)]).encode()
    key = int.from_bytes(hashlib.sha256(payload).digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *labels: object) -> int:
    """A stable 63-bit child seed for a named sub-task."""
    payload = ":".join([str(int(seed)), *map(str, labels)]).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little") >> 1
