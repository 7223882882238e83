"""Compiled-side PRNG: SplitMix64 stream derivation + xoshiro256++ core.

Used inside numba kernels where a NumPy Generator cannot go.  The stream for
``(master, stream)`` is seeded by mixing the pair through SplitMix64; kernels
then draw from xoshiro256++.  Constants are the reference ones; do not touch
them, golden files depend on the exact sequences.
"""

import numpy as np
from numba import njit, uint64

_M64 = uint64(0xFFFFFFFFFFFFFFFF)
# odd multiplier spreading stream indices across the SplitMix64 seed space
_STREAM_MULT = uint64(0xA3EC647659359ACD)
_TWO53_INV = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _sm64(z):
    """One SplitMix64 draw; returns (output, advanced state)."""
    z = (z + uint64(0x9E3779B97F4A7C15)) & _M64
    x = z
    x = (x ^ (x >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> uint64(27))) * uint64(0x94D049BB133111EB)
    x = x ^ (x >> uint64(31))
    return x, z


@njit(cache=True)
def stream_state(master, stream):
    """Fresh xoshiro256++ state for the (master, stream) pair."""
    s = np.empty(4, dtype=np.uint64)
    z = (uint64(master) ^ (uint64(stream) * _STREAM_MULT)) & _M64
    for i in range(4):
        out, z = _sm64(z)
        s[i] = out
    return s


@njit(cache=True, inline="always")
def _rotl(x, k):
    return ((x << k) | (x >> (uint64(64) - k))) & _M64


@njit(cache=True, inline="always")
def next_u64(s):
    """xoshiro256++ step on state array ``s`` (shape (4,), uint64)."""
    result = (_rotl((s[0] + s[3]) & _M64, uint64(23)) + s[0]) & _M64
    t = (s[1] << uint64(17)) & _M64
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], uint64(45))
    return result


@njit(cache=True, inline="always")
def next_unit(s):
    """Uniform double in [0, 1) with 53 random bits."""
    return float(next_u64(s) >> uint64(11)) * _TWO53_INV


@njit(cache=True, inline="always")
def next_unit_open(s):
    """Uniform double in (0, 1]; safe as a log() argument."""
    return (float(next_u64(s) >> uint64(11)) + 1.0) * _TWO53_INV


@njit(cache=True, inline="always")
def next_sign(s):
    """+1.0 or -1.0 with equal probability (top bit of one draw)."""
    return 1.0 if (next_u64(s) >> uint64(63)) else -1.0


@njit(cache=True, inline="always")
def next_normal(s):
    """One standard normal via Box-Muller (consumes two draws)."""
    u1 = next_unit_open(s)
    u2 = next_unit(s)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(6.283185307179586 * u2)
