"""Seeded, counter-addressable random streams.

A stream is a Philox generator.  Its key is derived from ``(master_seed,
*prefix)`` through :class:`numpy.random.SeedSequence` spawn keys and its
starting counter holds the last index, so replica ``r`` of a family starts
``2**192`` blocks away from replica ``r + 1``.  A replica's draws depend only
on its own address, never on how many replicas run, in which order, or on
how many workers share the campaign.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

RandomStream = np.random.Generator


@lru_cache(maxsize=64)
def _key(master_seed: int, prefix: tuple[int, ...], depth: int) -> np.ndarray:
    if master_seed < 0 or any(i < 0 for i in prefix):
        raise ValueError("seeds and stream indices must be non-negative")
    # the depth keeps (seed) and (seed, 0) apart
    seq = np.random.SeedSequence(master_seed, spawn_key=(depth, *prefix))
    key = seq.generate_state(2, np.uint64)
    key.flags.writeable = False
    return key


def _state(key: np.ndarray, index: int) -> dict:
    if index < 0:
        raise ValueError("seeds and stream indices must be non-negative")
    return {
        "bit_generator": "Philox",
        "state": {"counter": np.array([0, 0, 0, index], dtype=np.uint64), "key": key.copy()},
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


def replica_stream(master_seed: int, *index: int) -> RandomStream:
    """A fresh generator for address ``(master_seed, *index)``."""
    index = tuple(int(i) for i in index)
    prefix, last = (index[:-1], index[-1]) if index else ((), 0)
    bg = np.random.Philox(key=_key(int(master_seed), prefix, len(index)))
    bg.state = _state(bg.state["state"]["key"], last)
    return np.random.Generator(bg)


class StreamFamily:
    """Streams ``(master_seed, *prefix, r)`` for many ``r``, sharing one bit generator.

    ``stream(r)`` draws exactly what ``replica_stream(master_seed, *prefix, r)``
    draws, but it re-addresses a single Philox instead of building one, which
    matters when replicas are short.  A returned stream is only valid until the
    next call to ``stream``.
    """

    def __init__(self, master_seed: int, *prefix: int):
        self._prefix = tuple(int(i) for i in prefix)
        self._key = _key(int(master_seed), self._prefix, len(self._prefix) + 1)
        self._bg = np.random.Philox(key=self._key)

    def stream(self, r: int) -> RandomStream:
        self._bg.state = _state(self._key, int(r))
        return np.random.Generator(self._bg)


@lru_cache(maxsize=16)
def stream_family(master_seed: int, *prefix: int) -> StreamFamily:
    """Per-process cached family, for replica loops that run one replica at a time."""
    return StreamFamily(master_seed, *prefix)
