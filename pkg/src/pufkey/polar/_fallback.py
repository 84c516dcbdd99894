"""Pure numpy successive-cancellation list decoder.

Mirrors the compiled kernel in ``_scl.pyx`` operation for operation: same
buffer layout, same path ordering after each split, same stable selection.
Active paths are kept compacted in rows ``0..P-1``.
"""

import numpy as np


def _f_exact(a, b):
    m = np.minimum(np.abs(a), np.abs(b))
    s = np.where((a >= 0) == (b >= 0), m, -m)
    return s + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))


def _penalty(z):
    # z = llr for bit 0, -llr for bit 1
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(-z, 0.0)


class _Decoder:
    def __init__(self, llr, frozen, frozen_values, list_size):
        n = llr.shape[0]
        self.n = n
        self.L = list_size
        self.frozen = frozen
        self.fval = frozen_values
        self.llr = np.zeros((list_size, 2 * n))
        self.bits = np.zeros((list_size, 2 * n), dtype=np.uint8)
        self.u = np.zeros((list_size, n), dtype=np.uint8)
        self.pm = np.zeros(list_size)
        self.llr[0, n:] = llr
        self.P = 1

    def node(self, N, leaf0):
        if N == 1:
            self.leaf(leaf0)
            return
        h = N >> 1
        P = self.P
        l = self.llr
        l[:P, h:N] = _f_exact(l[:P, N:N + h], l[:P, N + h:2 * N])
        self.node(h, leaf0)
        P = self.P
        bt = self.bits
        left = bt[:P, h:N].copy()
        bt[:P, N:N + h] = left
        sign = 1.0 - 2.0 * left
        l[:P, h:N] = l[:P, N + h:2 * N] + sign * l[:P, N:N + h]
        self.node(h, leaf0 + h)
        P = self.P
        right = bt[:P, h:N]
        bt[:P, N:N + h] ^= right
        bt[:P, N + h:2 * N] = right

    def leaf(self, i):
        P = self.P
        lv = self.llr[:P, 1]
        if self.frozen[i]:
            b = int(self.fval[i])
            self.pm[:P] += _penalty(lv if b == 0 else -lv)
            self.bits[:P, 1] = b
            self.u[:P, i] = b
            return
        cand = np.empty(2 * P)
        cand[0::2] = self.pm[:P] + _penalty(lv)
        cand[1::2] = self.pm[:P] + _penalty(-lv)
        if 2 * P <= self.L:
            keep = np.ones(2 * P, dtype=bool)
        else:
            keep = np.zeros(2 * P, dtype=bool)
            keep[np.argsort(cand, kind="stable")[: self.L]] = True
        sel = np.flatnonzero(keep)
        rows = sel >> 1
        chosen = (sel & 1).astype(np.uint8)
        self.llr[: len(sel)] = self.llr[rows]
        self.bits[: len(sel)] = self.bits[rows]
        self.u[: len(sel)] = self.u[rows]
        self.pm[: len(sel)] = cand[sel]
        self.bits[: len(sel), 1] = chosen
        self.u[: len(sel), i] = chosen
        self.P = len(sel)


def scl_decode(llr, frozen, frozen_values, list_size):
    """Return the u-estimate of the best surviving path."""
    dec = _Decoder(np.asarray(llr, dtype=np.float64), frozen, frozen_values,
                   list_size)
    dec.node(dec.n, 0)
    best = int(np.argmin(dec.pm[: dec.P]))
    return dec.u[best].copy()
