"""Counter-based random digits.

Philox4x64 maps (key, counter) to four 64-bit words. Point i owns the counter
block [i * W/4, (i+1) * W/4) where W is its word count rounded up to a multiple
of four, so any contiguous range of points can be generated independently and
the result is identical however the range is split across workers.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

_MASK128 = (1 << 128) - 1


def _padded(words: int) -> int:
    return -(-words // 4) * 4


def raw_words(seed: int, start: int, stop: int, words: int) -> np.ndarray:
    """uint64 array of shape (stop - start, words) for points start..stop-1."""
    if seed < 0:
        raise DomainError(f"seed must be non-negative, got {seed}")
    padded = _padded(words)
    gen = np.random.Philox(key=seed & _MASK128, counter=start * (padded // 4))
    out = gen.random_raw((stop - start) * padded).reshape(stop - start, padded)
    return out[:, :words]


def uniform_digit_indices(seed: int, start: int, stop: int, words: int, n: int) -> np.ndarray:
    """Uniform integers in [0, n) via the top 32 bits (bias below n / 2^32)."""
    u = raw_words(seed, start, stop, words)
    return ((u >> np.uint64(32)) * np.uint64(n)) >> np.uint64(32)
