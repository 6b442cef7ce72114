"""Keyed, reproducible RNG substreams.

Every source of randomness in a run derives from ``substream(seed, *keys)``
with a distinct key path, so enabling or disabling one consumer can never
shift the draws of another. String keys hash with crc32, which is stable
across platforms and Python versions.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

SEED_ENV_VAR = "PERTURBRL_SEED"


def _key_int(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & 0xFFFFFFFF


def substream(*keys) -> np.random.Generator:
    return np.random.default_rng([_key_int(k) for k in keys])


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV_VAR, "0"))
