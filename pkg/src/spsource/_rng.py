"""Counter-based random numbers.

Every draw is a pure function of ``(seed, stream, index)``: the value is the
``index``-th output of a SplitMix64 sequence whose starting state is derived
from ``seed`` and ``stream``.  Chunks of a stream can therefore be produced in
any order, or by different workers, and still agree bit for bit.
"""
import zlib

import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def salt(name):
    """Stable 32-bit stream id for an operation name."""
    return zlib.crc32(name.encode())


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _key(seed, stream):
    with np.errstate(over="ignore"):
        k = _mix(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        return _mix(k ^ (np.uint64(int(stream) & 0xFFFFFFFFFFFFFFFF) * _GOLDEN))


def uniform(seed, stream, index):
    """Uniform doubles in [0, 1) for an array of counter values."""
    index = np.asarray(index, dtype=np.uint64)
    key = _key(seed, stream)
    with np.errstate(over="ignore"):
        z = _mix(key + (index + np.uint64(1)) * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def uniform_range(seed, stream, start, stop):
    return uniform(seed, stream, np.arange(start, stop, dtype=np.uint64))


def normal(seed, stream, index):
    """Standard normal draws (Box-Muller on two sub-streams)."""
    u1 = uniform(seed, 2 * int(stream), index)
    u2 = uniform(seed, 2 * int(stream) + 1, index)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def exponential(seed, stream, index, rate):
    return -np.log1p(-uniform(seed, stream, index)) / rate


def seed_key(seed):
    """Seed-level key for compiled kernels; combine with ``nb_key``."""
    with np.errstate(over="ignore"):
        return _mix(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)


@numba.njit(cache=True)
def nb_uniform(key, index):
    z = numba.uint64(key) + (numba.uint64(index) + numba.uint64(1)) * numba.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> numba.uint64(30))) * numba.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> numba.uint64(27))) * numba.uint64(0x94D049BB133111EB)
    z = z ^ (z >> numba.uint64(31))
    return numba.float64(z >> numba.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def nb_key(seed_key, stream):
    z = numba.uint64(seed_key) ^ (numba.uint64(stream) * numba.uint64(0x9E3779B97F4A7C15))
    z = (z ^ (z >> numba.uint64(30))) * numba.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> numba.uint64(27))) * numba.uint64(0x94D049BB133111EB)
    return z ^ (z >> numba.uint64(31))


def derive_seed(seed, name):
    """Independent 63-bit seed for a named sub-task of a run seeded with ``seed``."""
    return int(_key(seed, salt(name)) >> np.uint64(1))
