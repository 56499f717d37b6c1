"""Deterministic RNG stream derivation shared by the oracle and the generator."""

from __future__ import annotations

import numpy as np

_U64 = (1 << 64) - 1


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, *key); stable across platforms."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed & _U64, spawn_key=tuple(k & _U64 for k in key))
    )
