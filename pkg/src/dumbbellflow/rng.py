"""Counter-based random numbers (Philox4x32-10) for reproducible ensembles.

Every draw is a pure function of ``(key, counter)``.  Particle ``i`` at step
``n`` always sees the same normals no matter how the ensemble is chunked
across workers, which is what makes serial and threaded runs bit-identical.
"""
from __future__ import annotations

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 block function.

    Parameters
    ----------
    counter : sequence of 4 uint32 arrays (broadcastable)
    key : sequence of 2 uint32 scalars or arrays

    Returns
    -------
    tuple of 4 uint64 arrays holding 32-bit words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint64) & _MASK for k in key)
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _S32) ^ c3 ^ k1,
            p0 & _MASK,
        )
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def _uniform(word):
    # (0, 1], never 0 so log() in Box-Muller is finite
    return (word.astype(np.float64) + 1.0) * (1.0 / 4294967296.0)


@nb.njit(cache=True, inline="always")
def _philox_scalar(c0, c1, c2, c3, k0, k1):
    m = np.uint64(0xFFFFFFFF)
    for _ in range(10):
        p0 = np.uint64(0xD2511F53) * c0
        p1 = np.uint64(0xCD9E8D57) * c2
        n0 = (p1 >> np.uint64(32)) ^ c1 ^ k0
        n1 = p1 & m
        n2 = (p0 >> np.uint64(32)) ^ c3 ^ k1
        n3 = p0 & m
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + np.uint64(0x9E3779B9)) & m
        k1 = (k1 + np.uint64(0xBB67AE85)) & m
    return c0, c1, c2, c3


@nb.njit(cache=True, parallel=True)
def _normals_kernel(ids, lo, hi, purpose, k0, k1, n, out):
    nblocks = (n + 3) // 4
    scale = 1.0 / 4294967296.0
    for i in nb.prange(ids.size):
        for b in range(nblocks):
            w0, w1, w2, w3 = _philox_scalar(ids[i], lo, hi, np.uint64((purpose << 8) + b), k0, k1)
            u1 = (np.float64(w0) + 1.0) * scale
            u2 = (np.float64(w1) + 1.0) * scale
            u3 = (np.float64(w2) + 1.0) * scale
            u4 = (np.float64(w3) + 1.0) * scale
            r1 = np.sqrt(-2.0 * np.log(u1))
            r2 = np.sqrt(-2.0 * np.log(u3))
            vals = (r1 * np.cos(2 * np.pi * u2), r1 * np.sin(2 * np.pi * u2),
                    r2 * np.cos(2 * np.pi * u4), r2 * np.sin(2 * np.pi * u4))
            for j in range(4):
                if 4 * b + j < n:
                    out[i, 4 * b + j] = vals[j]


def set_threads(n: int | None):
    """Cap the worker threads used by compiled kernels."""
    if n:
        nb.set_num_threads(max(1, min(int(n), nb.config.NUMBA_NUM_THREADS)))


def _check_ids(ids) -> np.ndarray:
    # particle ids fill one 32-bit counter word
    ids = np.ascontiguousarray(ids, dtype=np.uint64)
    if ids.size and ids.max() > _MASK:
        raise ValueError("particle ids must be below 2**32")
    return ids


class CounterRNG:
    """Stateless normal generator keyed by a seed and a stream tag.

    ``normals(step, ids, n)`` returns an array of shape ``(len(ids), n)``.
    The counter is ``(particle id, step low, step high, block)``; ``block``
    enumerates groups of four normals and a caller-chosen ``purpose`` offset
    (used e.g. for step-halving retries).
    """

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = seed
        self.stream = int(stream)
        self._key = (
            np.uint64(seed & 0xFFFFFFFF),
            np.uint64(((seed >> 32) ^ (self.stream * 0x9E3779B1)) & 0xFFFFFFFF),
        )

    def normals(self, step: int, ids, n: int, purpose: int = 0) -> np.ndarray:
        """Compiled path; per-entry identical to :meth:`normals_reference` up to libm rounding."""
        ids = _check_ids(ids)
        out = np.empty((ids.size, n))
        _normals_kernel(ids, np.uint64(int(step) & 0xFFFFFFFF), np.uint64((int(step) >> 32) & 0xFFFFFFFF),
                        int(purpose), self._key[0], self._key[1], int(n), out)
        return out

    def normals_reference(self, step: int, ids, n: int, purpose: int = 0) -> np.ndarray:
        """Pure-numpy evaluation of the same stream."""
        ids = _check_ids(ids)
        nblocks = (n + 3) // 4
        out = np.empty((ids.size, 4 * nblocks))
        lo = np.uint64(int(step) & 0xFFFFFFFF)
        hi = np.uint64((int(step) >> 32) & 0xFFFFFFFF)
        for b in range(nblocks):
            blk = np.uint64((int(purpose) << 8) + b)
            w = philox4x32((ids, lo, hi, blk), self._key)
            u1, u2, u3, u4 = (_uniform(x) for x in w)
            r1 = np.sqrt(-2.0 * np.log(u1))
            r2 = np.sqrt(-2.0 * np.log(u3))
            out[:, 4 * b + 0] = r1 * np.cos(2 * np.pi * u2)
            out[:, 4 * b + 1] = r1 * np.sin(2 * np.pi * u2)
            out[:, 4 * b + 2] = r2 * np.cos(2 * np.pi * u4)
            out[:, 4 * b + 3] = r2 * np.sin(2 * np.pi * u4)
        return out[:, :n]
