"""Counter-based random streams for reproducible agent simulations.

Every draw is addressed by ``(seed, step, stream, agent)``.  A Philox
generator keyed by the master seed is positioned at counter
``[0, step, stream, 0]``; the i-th double it emits belongs to agent ``i``.
Adding agents therefore never perturbs the draws of existing agents, and
steps or streams never overlap (Philox counters only advance in word 0).

Streams:

* ``ACTION``     - action sampling from a conditional policy
* ``MOVE``       - idiosyncratic transition noise
* ``COMMON``     - common noise (only agent 0 of the stream is used)
"""

from __future__ import annotations

import numpy as np

ACTION = 0
MOVE = 1
COMMON = 2

_KEY_MASK = (1 << 64) - 1


def _key(seed: int) -> np.ndarray:
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    return np.array([seed & _KEY_MASK, (seed >> 64) & _KEY_MASK], dtype=np.uint64)


def uniforms(seed: int, step: int, stream: int, n: int) -> np.ndarray:
    """Return ``n`` uniforms on [0, 1): one per agent for this step and stream."""
    counter = np.array([0, step, stream, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=_key(seed), counter=counter))
    return gen.random(n)


def common_noise_index(seed: int, step: int, probs: np.ndarray) -> int:
    """Draw the common-noise atom index for ``step``."""
    u = uniforms(seed, step, COMMON, 1)[0]
    return sample_index(cumulative(np.asarray(probs, dtype=float)), u)


def cumulative(p: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis, renormalised so the tail is exactly 1."""
    cdf = np.cumsum(p, axis=-1)
    total = cdf[..., -1:]
    return np.divide(cdf, total, out=np.zeros_like(cdf), where=total > 0)


def sample_index(cdf: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(cdf) - 1)


def sample_rows(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, one row of ``cdf`` per uniform in ``u``."""
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def sample_table(cdf_t: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Same draws as :func:`sample_rows` with ``cdf = cdf_t.T[rows]``.

    ``cdf_t`` holds one cumulative row per column, so each comparison sweeps
    a long contiguous axis; this is the fast path for large agent counts.
    """
    out = np.zeros(len(u), dtype=np.intp)
    for k in range(cdf_t.shape[0] - 1):
        out += u >= cdf_t[k, rows]
    return out
