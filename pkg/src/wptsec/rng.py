"""Counter-based random stream derivation.

Every random draw in the simulator comes from a generator derived from the
master seed plus a tuple of integer keys, so one stream never shifts another:
adding a node or a Monte Carlo chunk leaves all other streams untouched.
"""

import hashlib

import numpy as np

JITTER = 1
NOISE = 2
MONTE_CARLO = 3


def name_key(name: str) -> int:
    """Stable 63-bit integer for a string identifier (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)
