"""Reproducible random streams keyed by ``(seed, stream_id)``.

Each stream is a Philox4x64 counter-based generator whose 128-bit key packs
the 64-bit seed and the 64-bit stream id, so replication ``k`` of experiment
``e`` can own the stream ``stream_id_for(e, k)`` no matter which worker runs
it or in what order.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_id_for(*parts) -> int:
    """Stable 64-bit stream id derived from an arbitrary label tuple."""
    label = "\x1f".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(label, digest_size=8).digest(), "little")


class RngStream:
    """One owned random stream. Not safe to share between tasks."""

    def __init__(self, seed: int, stream_id: int = 0):
        seed, stream_id = int(seed), int(stream_id)
        if not (0 <= seed <= _MASK64 and 0 <= stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = seed
        self.stream_id = stream_id
        self._gen = np.random.Generator(np.random.Philox(key=seed | (stream_id << 64)))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def uniform(self, size=None):
        """Uniform doubles on [0, 1); successive calls continue the stream."""
        return self._gen.random(size)

    def spawn(self, *label) -> "RngStream":
        """Independent child stream with the same seed and a derived id."""
        return RngStream(self.seed, stream_id_for(self.stream_id, *label))
