"""Counter-based random streams for partition-independent simulation.

Each normal draw is a pure function of the coordinates
``(seed, agent_index, year, tag)``: splitting the agent range across
workers, reordering evaluation, or regenerating a single year's noise
always yields the same values. That property is what makes simulation
output independent of thread count and lets the calibration search reuse
one year's noise across many candidate rates without storing it.

The construction is a keyed SplitMix64 stream: the scalar coordinates
(seed, year, tag) are absorbed into a 64-bit stream origin with the
SplitMix64 finalizer, and agent ``i`` reads output ``i`` of the stream
started there. Uniforms are mapped to normals by inverting the standard
normal CDF, which consumes exactly one uniform per draw (no rejection),
so draw ``i`` never depends on draws ``0..i-1``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

# Per-slot salts so (seed, year, tag) permutations cannot collide.
_YEAR_SALT = 0xD1B54A32D192ED03
_TAG_SALT = 0x8CB92BA72F3D8DD7

# Substream tags.
INIT_TAG = 0
STEP_TAG = 1


def _mix(z: int) -> int:
    """SplitMix64 finalizer on a Python int (exact mod-2^64 arithmetic)."""
    z &= _MASK64
    z ^= z >> 30
    z = (z * _MIX_A) & _MASK64
    z ^= z >> 27
    z = (z * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    """Vectorized SplitMix64 finalizer on a uint64 array."""
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * np.uint64(_MIX_A)
        z = z ^ (z >> np.uint64(27))
        z = z * np.uint64(_MIX_B)
        z = z ^ (z >> np.uint64(31))
    return z


def stream_origin(seed: int, year: int, tag: int) -> int:
    """Absorb the scalar coordinates into a 64-bit stream start state."""
    h = _mix((seed & _MASK64) + _GOLDEN)
    h = _mix(h ^ (year & _MASK64) ^ _YEAR_SALT)
    h = _mix(h ^ (tag & _MASK64) ^ _TAG_SALT)
    return h


class RngStream:
    """Deterministic per-coordinate random source for one seed.

    Parameters
    ----------
    seed : int
        Stream seed; reduced mod 2^64.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64

    def __repr__(self):
        return f"RngStream(seed={self.seed})"

    def uniforms(self, year: int, tag: int, lo: int, hi: int) -> np.ndarray:
        """Uniform(0, 1) draws for agents ``lo..hi-1`` at (year, tag).

        Values lie strictly inside (0, 1) so the normal inverse is finite.
        """
        if hi < lo:
            raise ValueError(f"invalid agent range [{lo}, {hi})")
        origin = stream_origin(self.seed, year, tag)
        idx = np.arange(lo + 1, hi + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = np.uint64(origin) + idx * np.uint64(_GOLDEN)
        bits = _mix_array(state)
        # 53 significant bits, offset by half an ulp: result in (0, 1).
        return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normals(self, year: int, tag: int, lo: int, hi: int,
                dt: float = 1.0) -> np.ndarray:
        """N(0, dt) draws for agents ``lo..hi-1`` at (year, tag)."""
        w = ndtri(self.uniforms(year, tag, lo, hi))
        if dt != 1.0:
            w *= np.sqrt(dt)
        return w
