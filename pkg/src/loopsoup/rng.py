"""Counter-based random streams.

Every random draw in the package is addressed by a tuple
``(master seed, module tag, cell index, replica index, ...)``. Two kinds of
consumers exist:

* numpy code receives a :class:`numpy.random.Generator` backed by Philox,
  keyed from the tuple (:func:`stream`);
* numba kernels receive a single 64-bit key (:func:`key64`) and hash
  ``(key, counter)`` pairs with SplitMix64, so results do not depend on how
  work is split across threads or batches.
"""

from __future__ import annotations

import zlib

import numba as nb
import numpy as np

_MASK64 = (1 << 64) - 1


def _tag(x) -> int:
    if isinstance(x, str):
        return zlib.crc32(x.encode())
    return int(x) & 0xFFFFFFFF if int(x) >= 0 else zlib.crc32(str(x).encode())


def _seed_sequence(seed: int, keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_tag(k) for k in keys))


def stream(seed: int, *keys) -> np.random.Generator:
    """Return an independent Philox generator addressed by ``(seed, *keys)``.

    Keys may be strings (module tags) or non-negative integers (cell and
    replica indices).
    """
    state = _seed_sequence(seed, keys).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=state))


def key64(seed: int, *keys) -> np.uint64:
    """64-bit key for the numba kernels, derived like :func:`stream`."""
    return np.uint64(_seed_sequence(seed, keys).generate_state(1, np.uint64)[0])


def child_key(rng: np.random.Generator) -> np.uint64:
    """Draw a kernel key from an existing generator."""
    return np.uint64(rng.integers(0, 2**63, dtype=np.int64))


@nb.njit(cache=True, inline="always")
def splitmix64(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(_MASK64)
    z = x
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(_MASK64)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(_MASK64)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, inline="always")
def subkey(key, index):
    return splitmix64(key ^ splitmix64(np.uint64(index) + np.uint64(0x632BE59BD9B4E019)))


@nb.njit(cache=True, inline="always")
def uniform(key, counter):
    """Uniform on [0, 1) from 53 hashed bits."""
    bits = splitmix64(key + np.uint64(counter) * np.uint64(0xD1B54A32D192ED03))
    return (bits >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True, inline="always")
def uniform_open(key, counter):
    """Uniform on (0, 1)."""
    bits = splitmix64(key + np.uint64(counter) * np.uint64(0xD1B54A32D192ED03))
    return ((bits >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)
