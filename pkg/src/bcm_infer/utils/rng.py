"""Seeded random substreams.

One master seed fans out into named, independent streams through
``numpy.random.SeedSequence`` so that, for instance, the per-step noise of a
trajectory does not shift when the horizon is extended or when the initial
opinions are drawn differently.
"""

import hashlib

import numpy as np

# Stable spawn keys; never reorder.
STREAM_KEYS = {
    "initial": 0,
    "noise": 1,
    "filter": 2,
    "restarts": 3,
}


def _key(name: str) -> int:
    if name in STREAM_KEYS:
        return STREAM_KEYS[name]
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little") + len(STREAM_KEYS)


def substream(seed: int, name: str) -> np.random.Generator:
    """
    Return the generator for a named substream of ``seed``.

    Args:
        seed: Master seed (any non-negative integer up to 64 bits)
        name: Stream name ("initial", "noise", "filter", "restarts" or any label)

    Returns:
        Independent ``numpy.random.Generator``
    """
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(_key(name),))
    return np.random.default_rng(sequence)


def spawn(seed: int, name: str, count: int) -> list[np.random.Generator]:
    """Return ``count`` independent child generators of a named substream."""
    parent = np.random.SeedSequence(entropy=seed, spawn_key=(_key(name),))
    return [np.random.default_rng(child) for child in parent.spawn(count)]
