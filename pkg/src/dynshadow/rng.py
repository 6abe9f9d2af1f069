"""Counter-based random streams.

Every sampling routine in the package draws its randomness from SplitMix64.
Shot ``k`` under seed ``s`` owns its own sub-stream: a SplitMix64 generator
whose state is the ``k``-th output of a SplitMix64 generator seeded with ``s``.
Draw ``j`` of that sub-stream is therefore a pure function of ``(s, k, j)``,
which makes shot batches order-independent and lets us evaluate whole batches
with vectorised uint64 arithmetic.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_TO_UNIT = 1.0 / (1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def normalize_seed(seed: int) -> int:
    """Map any Python int onto the 64-bit seed space (two's complement)."""
    return int(seed) & _MASK64


def shot_keys(seed: int, shots: np.ndarray) -> np.ndarray:
    """Sub-stream states for the given shot indices."""
    shots = np.asarray(shots, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = np.uint64(normalize_seed(seed))
        return _mix(base + (shots + np.uint64(1)) * GOLDEN)


def raw_draws(keys: np.ndarray, start: int, count: int) -> np.ndarray:
    """64-bit outputs ``start .. start+count-1`` of each sub-stream, shape (len(keys), count)."""
    keys = np.asarray(keys, dtype=np.uint64)
    j = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(keys[:, None] + j[None, :] * GOLDEN)


def uniforms(keys: np.ndarray, start: int, count: int) -> np.ndarray:
    """Uniform doubles in [0, 1) with 53 random bits, shape (len(keys), count)."""
    raw = raw_draws(keys, start, count)
    return (raw >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def derive_seed(seed: int, index: int) -> int:
    """A child seed, e.g. for an inner run launched once per outer shot."""
    return int(shot_keys(seed, np.array([index]))[0])
