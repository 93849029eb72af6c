"""Deterministic RNG stream derivation.

Every stochastic component in the package (weight init, shuffling,
sampling, synthetic data, ring ordering) pulls its generator from
``child_rng`` so that a single experiment seed fans out into stable,
independent streams identified by string labels.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_word(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def child_rng(seed: int, *labels: str) -> np.random.Generator:
    """Derive a named generator from a base seed.

    The same (seed, labels) pair always yields the same stream, and
    distinct label paths yield independent streams.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    entropy = [seed] + [_label_word(label) for label in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))
