"""Named random streams derived from a single seed.

Each consumer (init, shuffling, dropout, data generation) gets its own
generator keyed by a stable name, so adding a draw in one place never
shifts the values another place sees.
"""

from __future__ import annotations

import hashlib

import numpy as np


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Generator seeded by ``seed`` and a stable hash of ``name``."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])
