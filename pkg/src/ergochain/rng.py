"""Counter-based random streams.

Every draw is a pure function of ``(master_seed, stream_id, counter)``, so a
trajectory simulated on stream ``s`` is identical no matter which worker runs
it or in what order.  The generator is SplitMix64 keyed per stream; the
compiled core in :mod:`ergochain._core` reproduces the same bit pattern.
"""

from __future__ import annotations

import hashlib

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_M53 = 2.0 ** -53

__all__ = ["RandomStream", "stream_key", "uniform_at", "derive_seed"]


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, stream_id: int) -> int:
    """64-bit key of the stream ``(master_seed, stream_id)``."""
    s = _mix64((master_seed + GOLDEN) & MASK64)
    return _mix64(s ^ _mix64((stream_id * GOLDEN + 0x632BE59BD9B4E019) & MASK64))


def uniform_at(key: int, counter: int) -> float:
    """The ``counter``-th draw of the keyed stream, a double in (0, 1]."""
    h = _mix64((key + (counter + 1) * GOLDEN) & MASK64)
    return ((h >> 11) + 1) * _TWO_M53


def derive_seed(seed: int, *labels) -> int:
    """Hash ``seed`` and a sequence of labels into a 64-bit sub-seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed) & MASK64).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


class RandomStream:
    """A positioned stream of uniforms on (0, 1].

    Parameters
    ----------
    master_seed : int
        Experiment-wide seed (reduced mod 2**64).
    stream_id : int
        Index of the stream; distinct ids give independent streams.
    counter : int
        Position of the next draw.
    """

    __slots__ = ("master_seed", "stream_id", "counter", "_key")

    def __init__(self, master_seed: int, stream_id: int = 0, counter: int = 0):
        if counter < 0:
            raise ValueError("counter must be nonnegative")
        self.master_seed = int(master_seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        self.counter = int(counter)
        self._key = stream_key(self.master_seed, self.stream_id)

    @property
    def key(self) -> int:
        return self._key

    def uniform(self) -> float:
        u = uniform_at(self._key, self.counter)
        self.counter += 1
        return u

    def copy(self) -> "RandomStream":
        return RandomStream(self.master_seed, self.stream_id, self.counter)

    def __repr__(self) -> str:
        return (f"RandomStream(master_seed={self.master_seed}, "
                f"stream_id={self.stream_id}, counter={self.counter})")
