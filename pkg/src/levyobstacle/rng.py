"""Counter-based uniforms (SplitMix64 in counter mode).

A path owns a 64-bit key derived from ``(seed, stream, path_index)``; its
k-th uniform is ``mix(key + (k + 1) * GOLDEN)``.  Draws therefore depend only
on those integers, never on ensemble size, chunking or thread count.
"""
import numpy as np

from ._backend import njit, use_numba

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PATH_MUL = np.uint64(0xD6E8FEB86659FD93)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


def _mix_np(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def uniform_at(key, k):
    """Uniform on the open interval (0, 1) for counter ``k`` of ``key``."""
    z = mix64(key + (np.uint64(k) + np.uint64(1)) * GOLDEN)
    return (np.float64(z >> _S11) + 0.5) * _INV53


def _seed_base(seed, stream):
    seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    stream = np.uint64(int(stream) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        return _mix_np(_mix_np(seed) ^ (stream * GOLDEN + np.uint64(0x632BE59BD9B4E019)))


def path_keys(seed, n_paths, stream=0, first_path=0):
    """Per-path substream keys; path ``i`` gets the same key for any ``n_paths``."""
    base = _seed_base(seed, stream)
    idx = np.arange(first_path, first_path + n_paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix_np(base ^ (idx * _PATH_MUL + np.uint64(1)))


def uniforms_np(keys, k):
    """Vectorised ``uniform_at`` for an array of keys and counters."""
    keys = np.asarray(keys, dtype=np.uint64)
    k = np.asarray(k, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix_np(keys + (k + np.uint64(1)) * GOLDEN)
    return ((z >> _S11).astype(np.float64) + 0.5) * _INV53


@njit
def _uniform_block_nb(keys, n, out):
    for i in range(keys.shape[0]):
        for j in range(n):
            out[i, j] = uniform_at(keys[i], j)


def uniform_block(keys, n):
    """``(len(keys), n)`` array of the first ``n`` uniforms of every key."""
    keys = np.asarray(keys, dtype=np.uint64)
    if use_numba():
        out = np.empty((keys.shape[0], n))
        _uniform_block_nb(keys, n, out)
        return out
    return uniforms_np(keys[:, None], np.arange(n, dtype=np.uint64)[None, :])
