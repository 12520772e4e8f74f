"""Counter-based random streams keyed by (seed, purpose, index...).

Every stochastic step (data generation, bootstrap replicate, Gaussian block)
draws from its own Philox stream, so results do not depend on the order in
which replicates are evaluated or on how many workers evaluate them.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

_PURPOSES = {
    "generate": 1,
    "bootstrap": 2,
    "gaussian": 3,
    "coverage": 4,
    "critical": 5,
}


def _purpose_code(purpose: str | int) -> int:
    if isinstance(purpose, int):
        return purpose
    try:
        return _PURPOSES[purpose]
    except KeyError:
        # stable across interpreter runs, unlike hash()
        digest = hashlib.sha256(purpose.encode()).digest()
        return int.from_bytes(digest[:4], "little") | (1 << 32)


def stream(seed: int, purpose: str | int, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, purpose, *index)``."""
    ss = np.random.SeedSequence(entropy=int(seed) % (1 << 64),
                                spawn_key=(_purpose_code(purpose),) + tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, purpose: str | int, *index: int) -> int:
    """A 63-bit child seed, used to hand seeds across API boundaries."""
    ss = np.random.SeedSequence(entropy=int(seed) % (1 << 64),
                                spawn_key=(_purpose_code(purpose),) + tuple(int(i) for i in index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def max_workers() -> int:
    """Worker cap from ``RANKUQ_THREADS`` (default 1, i.e. serial)."""
    raw = os.environ.get("RANKUQ_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)
