"""Polar transform, Monte-Carlo code construction and list decoding.

Conventions: indices are 0-based; the generator is the m-fold Kronecker power
of ``[[1, 0], [1, 1]]`` without bit reversal, so ``x = u @ G_n (mod 2)`` and
the first half of ``x`` is ``(u_a ^ u_b) G`` while the second half is
``u_b G``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import backend

LLR_CLIP = 30.0


def _check_length(n):
    if n < 1 or n & (n - 1):
        raise ValueError(f"block length must be a power of two, got {n}")


def polar_transform(u):
    """Apply ``G_n`` over GF(2) along the last axis (batched)."""
    x = np.array(u, dtype=np.uint8) & 1
    n = x.shape[-1]
    _check_length(n)
    lead = x.shape[:-1]
    half = n // 2
    while half >= 1:
        blocks = x.reshape(*lead, n // (2 * half), 2, half)
        blocks[..., 0, :] ^= blocks[..., 1, :]
        half //= 2
    return x


def bsc_llr(y, p, clip=LLR_CLIP):
    """Channel LLRs ``ln P(y|0)/P(y|1)`` for a BSC(p), clipped to ``±clip``."""
    y = np.asarray(y)
    if p <= 0.0:
        mag = clip
    elif p >= 0.5:
        mag = 0.0
    else:
        mag = min(np.log((1.0 - p) / p), clip)
    return mag * (1.0 - 2.0 * y.astype(np.float64))


def _f_exact(a, b):
    m = np.minimum(np.abs(a), np.abs(b))
    s = np.where((a >= 0) == (b >= 0), m, -m)
    return s + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))


def genie_leaf_llrs(channel_llr):
    """Leaf LLRs of genie-aided SC decoding of the all-zero word (batched).

    With every earlier decision fixed to zero the partial sums vanish, so the
    whole tree reduces to ``f`` on the left branch and ``a + b`` on the right.
    """
    l = np.array(channel_llr, dtype=np.float64)
    n = l.shape[-1]
    lead = l.shape[:-1]
    size = n
    while size > 1:
        half = size // 2
        blocks = l.reshape(*lead, n // size, 2, half)
        a = blocks[..., 0, :].copy()
        b = blocks[..., 1, :]
        blocks[..., 0, :] = _f_exact(a, b)
        blocks[..., 1, :] = a + b
        size = half
    return l


@dataclass(frozen=True)
class Ranking:
    """Bit channels ordered from least to most reliable."""

    n: int
    design_p: float
    order: np.ndarray
    log_error: np.ndarray

    def frozen(self, count):
        """The ``count`` least reliable indices, sorted ascending."""
        if not 0 <= count <= self.n:
            raise ValueError(f"frozen count {count} outside [0, {self.n}]")
        return np.sort(self.order[:count])


def construct_frozen_set(n, design_p, count=None, mc_trials=100_000, seed=0,
                         batch=2000):
    """Rank bit channels of ``G_n`` on BSC(design_p) by Monte-Carlo genie-aided SC.

    Each trial sends the all-zero word (the BSC is symmetric) and runs SC with
    a genie supplying the true past bits.  The per-trial error probability of
    bit channel ``i`` is the posterior probability of the wrong bit,
    ``1 / (1 + exp|L_i|)``; averaging it in log space resolves channels far
    below ``1 / mc_trials``, where hard error counts would all tie at zero.

    Returns ``(ranking, frozen)`` where ``frozen`` holds the ``count`` least
    reliable indices (``None`` if ``count`` is ``None``).
    """
    _check_length(n)
    if not 0.0 < design_p < 0.5:
        raise ValueError("design_p must lie in (0, 0.5)")
    rng = np.random.default_rng(seed)
    mag = np.log((1.0 - design_p) / design_p)
    chunks = []
    done = 0
    while done < mc_trials:
        t = min(batch, mc_trials - done)
        noise = rng.random((t, n)) < design_p
        leaf = genie_leaf_llrs(mag * (1.0 - 2.0 * noise))
        chunks.append(logsumexp(-np.logaddexp(0.0, np.abs(leaf)), axis=0))
        done += t
    log_error = logsumexp(np.vstack(chunks), axis=0) - np.log(mc_trials)
    order = np.argsort(-log_error, kind="stable")
    ranking = Ranking(n=n, design_p=float(design_p), order=order,
                      log_error=log_error)
    frozen = None if count is None else ranking.frozen(count)
    return ranking, frozen


def frozen_arrays(n, frozen):
    """Turn ``{index: bit}`` (or an index list, all zero) into mask/value arrays."""
    mask = np.zeros(n, dtype=np.uint8)
    values = np.zeros(n, dtype=np.uint8)
    if isinstance(frozen, dict):
        if frozen:
            idx = np.fromiter(frozen.keys(), dtype=np.int64)
            mask[idx] = 1
            values[idx] = np.fromiter(frozen.values(), dtype=np.uint8) & 1
    else:
        mask[np.asarray(frozen, dtype=np.int64)] = 1
    return mask, values


def scl_decode(llr, frozen, list_size=8):
    """Successive-cancellation list decoding; returns the full u-estimate.

    ``frozen`` maps index -> bit.  ``list_size=1`` is plain SC decoding.
    """
    llr = np.ascontiguousarray(llr, dtype=np.float64)
    n = llr.shape[0]
    _check_length(n)
    mask, values = frozen_arrays(n, frozen)
    return backend.scl(llr, mask, values, list_size)
