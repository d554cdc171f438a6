"""Hot loops for random-walk and path sampling, numba-compiled when available.

Set BRATTELI_NO_NUMBA=1 to force the pure-Python/numpy fallback; both
backends run the identical code. The RNG is a combined multiplicative
congruential generator (L'Ecuyer 1988): every intermediate product stays
below 2**47, so the arithmetic is exact in int64 on either backend and the
streams are bit-identical with and without compilation.

Per-trial streams are derived affinely from (seed, trial index) in uint64
array arithmetic, so trial results never depend on scheduling and a
parallel run merges to exactly the serial answer.
"""
from __future__ import annotations

import os

import numpy as np

_FORCED_OFF = bool(os.environ.get("BRATTELI_NO_NUMBA"))

if not _FORCED_OFF:
    try:
        from numba import njit, prange, set_num_threads as _set_threads
        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is an install extra
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

if not HAVE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(f):
            return f
        return deco

    prange = range

    def _set_threads(n):  # pragma: no cover - no-op fallback
        pass


def backend() -> str:
    return "numba" if HAVE_NUMBA else "python"


def set_threads(n: int | None = None) -> None:
    """Thread count for parallel kernels; BRATTELI_THREADS when n is None."""
    if n is None:
        raw = os.environ.get("BRATTELI_THREADS", "")
        if not raw.strip():
            return
        n = int(raw)
    if HAVE_NUMBA and n >= 1:
        _set_threads(n)


M1 = 2147483563
M2 = 2147483399
A1 = 40014
A2 = 40692


def trial_seeds(seed: int, trials: int) -> tuple[np.ndarray, np.ndarray]:
    """Independent (s1, s2) state pairs per trial, exact uint64 mixing."""
    idx = np.arange(trials, dtype=np.uint64)
    base = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    s1 = (base * np.uint64(2654435761)
          + idx * np.uint64(40503) + np.uint64(12345)) % np.uint64(M1 - 1)
    s2 = (base * np.uint64(1779033703)
          + idx * np.uint64(69069) + np.uint64(97531)) % np.uint64(M2 - 1)
    return (s1 + np.uint64(1)).astype(np.int64), \
           (s2 + np.uint64(1)).astype(np.int64)


@njit(cache=True)
def _walk_one(rowptr, cum, tgt, state, steps, s1, s2, start, count_returns):
    """Advance one trajectory; returns (final state, returns, s1, s2)."""
    cnt = 0
    for _ in range(steps):
        s1 = (A1 * s1) % M1
        s2 = (A2 * s2) % M2
        u = ((s1 - s2) % (M1 - 1)) / M1
        j = rowptr[state]
        while u >= cum[j]:
            j += 1
        state = tgt[j]
        if count_returns and state == start:
            cnt += 1
    return state, cnt, s1, s2


@njit(cache=True)
def walk_returns_kernel(rowptr, cum, tgt, start, steps, s1s, s2s):
    out = np.zeros(s1s.shape[0], dtype=np.int64)
    for t in range(s1s.shape[0]):
        _, cnt, _, _ = _walk_one(rowptr, cum, tgt, start, steps,
                                 s1s[t], s2s[t], start, True)
        out[t] = cnt
    return out


@njit(cache=True)
def walk_trace_kernel(rowptr, cum, tgt, start, steps, s1, s2):
    out = np.empty(steps + 1, dtype=np.int64)
    out[0] = start
    state = np.int64(start)
    for k in range(steps):
        state, _, s1, s2 = _walk_one(rowptr, cum, tgt, state, 1, s1, s2,
                                     start, False)
        out[k + 1] = state
    return out


@njit(cache=True)
def walk_hitting_kernel(rowptr, cum, tgt, level_of, start, bot, top,
                        max_steps, s1s, s2s):
    """Absorb at the bottom or top level; 1 = top, 0 = bottom, -1 = timeout."""
    out = np.empty(s1s.shape[0], dtype=np.int64)
    for t in range(s1s.shape[0]):
        s1 = s1s[t]
        s2 = s2s[t]
        state = np.int64(start)
        res = np.int64(-1)
        for _ in range(max_steps + 1):
            lvl = level_of[state]
            if lvl == bot:
                res = 0
                break
            if lvl == top:
                res = 1
                break
            state, _, s1, s2 = _walk_one(rowptr, cum, tgt, state, 1, s1, s2,
                                         state, False)
        out[t] = res
    return out


@njit(cache=True, parallel=True)
def walk_hitting_parallel(rowptr, cum, tgt, level_of, start, bot, top,
                          max_steps, s1s, s2s):
    out = np.empty(s1s.shape[0], dtype=np.int64)
    for t in prange(s1s.shape[0]):
        s1 = s1s[t]
        s2 = s2s[t]
        state = np.int64(start)
        res = np.int64(-1)
        for _ in range(max_steps + 1):
            lvl = level_of[state]
            if lvl == bot:
                res = 0
                break
            if lvl == top:
                res = 1
                break
            state, _, s1, s2 = _walk_one(rowptr, cum, tgt, state, 1, s1, s2,
                                         state, False)
        out[t] = res
    return out


@njit(cache=True)
def sample_chain_kernel(cumflat, rowstart, rowlen, strides, x0, depth,
                        ncyl, s1s, s2s):
    """Depth-step Markov chain over cell kernels; counts mixed-radix
    cylinder indices.  rowstart[k, i] locates the cumulative row of cell i
    at step k; strides give each step's positional weight in the index."""
    counts = np.zeros(ncyl, dtype=np.int64)
    for t in range(s1s.shape[0]):
        s1 = s1s[t]
        s2 = s2s[t]
        cell = np.int64(x0)
        idx = np.int64(0)
        for k in range(depth):
            s1 = (A1 * s1) % M1
            s2 = (A2 * s2) % M2
            u = ((s1 - s2) % (M1 - 1)) / M1
            base = rowstart[k, cell]
            j = base
            end = base + rowlen[k]
            while j < end - 1 and u >= cumflat[j]:
                j += 1
            cell = j - base
            idx += cell * strides[k]
        counts[idx] += 1
    return counts
