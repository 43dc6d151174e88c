"""SplitMix64 counter generator used by the synthetic data pipeline.

Output ``i`` of a stream with seed ``s`` is ``mix(s + (i + 1) * GOLDEN)`` where
``mix`` is the SplitMix64 finaliser::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

All arithmetic is modulo 2**64, so the bytes are identical on every
platform. Uniform floats take the top 53 bits: ``(z >> 11) * 2**-53``.
"""
from typing import Union

import numpy as np


GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def mix64(z: Union[np.ndarray, np.uint64]) -> np.ndarray:
    """Apply the SplitMix64 finaliser elementwise to uint64 values."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over='ignore'):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *keys: int) -> int:
    """Combine a base seed with integer keys into an independent stream seed."""
    state = np.uint64(seed & _MASK)
    for key in keys:
        with np.errstate(over='ignore'):
            state = mix64(state ^ (np.uint64(key & _MASK) * GOLDEN + GOLDEN))
    return int(state)


class SplitMix64:
    """Stateful SplitMix64 stream producing vectors of outputs at once.

    Parameters
    ----------
    seed : int
        Any integer; reduced modulo 2**64.
    """

    def __init__(self, seed: int) -> None:
        self.state = np.uint64(seed & _MASK)

    def next_uint64(self, count: int) -> np.ndarray:
        counters = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over='ignore'):
            values = mix64(self.state + counters * GOLDEN)
            self.state = np.uint64((int(self.state) + count * int(GOLDEN)) & _MASK)
        return values

    def uniform(self, count: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """``count`` floats uniform in ``[low, high)``."""
        unit = (self.next_uint64(count) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return low + (high - low) * unit

    def integers(self, low: int, high: int, count: int = 1) -> np.ndarray:
        """``count`` integers uniform in ``[low, high]`` (inclusive)."""
        span = high - low + 1
        return low + (self.next_uint64(count) % np.uint64(span)).astype(np.int64)
