# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled successive-cancellation list kernel.

Buffer layout per path: the LLRs and partial-sum bits of a tree node of size
N live at offsets [N, 2N) of a length-2n buffer, so the root occupies [n, 2n)
and a leaf sits at offset 1.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

cnp.import_array()

cdef enum:
    MAX_LIST = 64


cdef inline double f_exact(double a, double b) nogil:
    cdef double m = fabs(a) if fabs(a) < fabs(b) else fabs(b)
    cdef double s = m if (a >= 0) == (b >= 0) else -m
    return s + log1p(exp(-fabs(a + b))) - log1p(exp(-fabs(a - b)))


cdef inline double penalty(double llr, int bit) nogil:
    # -log P(bit | llr), shifted so the hard decision costs log1p(exp(-|llr|))
    cdef double z = llr if bit == 0 else -llr
    if z >= 0:
        return log1p(exp(-z))
    return -z + log1p(exp(z))


cdef struct State:
    int n
    int m
    int L
    int npaths
    double *llr          # L * 2n
    unsigned char *bits  # L * 2n
    unsigned char *u     # L * n
    double *pm           # L
    int *order           # active slots in canonical order
    const unsigned char *frozen
    const unsigned char *fval


cdef void copy_path(State *s, int src, int dst, int leaf) nogil:
    cdef int n2 = 2 * s.n
    cdef int lev, size
    for lev in range(1, s.m + 1):
        if not ((leaf >> (lev - 1)) & 1):
            size = 1 << lev
            memcpy(&s.llr[dst * n2 + size], &s.llr[src * n2 + size],
                   size * sizeof(double))
    memcpy(&s.bits[dst * n2], &s.bits[src * n2], n2)
    memcpy(&s.u[dst * s.n], &s.u[src * s.n], leaf)
    s.pm[dst] = s.pm[src]


cdef void leaf_step(State *s, int i) nogil:
    cdef int n2 = 2 * s.n
    cdef int p, k, slot, b, j, c, best, nsel, q, nfree, nnew
    cdef double lv
    cdef double cand_pm[2 * MAX_LIST]
    cdef int cand_idx[2 * MAX_LIST]
    cdef int keep[2 * MAX_LIST]
    cdef int free_slots[MAX_LIST]
    cdef int used[MAX_LIST]
    cdef int new_order[MAX_LIST]
    cdef int P = s.npaths

    if s.frozen[i]:
        b = s.fval[i]
        for p in range(P):
            slot = s.order[p]
            lv = s.llr[slot * n2 + 1]
            s.pm[slot] += penalty(lv, b)
            s.bits[slot * n2 + 1] = b
            s.u[slot * s.n + i] = b
        return

    for p in range(P):
        slot = s.order[p]
        lv = s.llr[slot * n2 + 1]
        cand_pm[2 * p] = s.pm[slot] + penalty(lv, 0)
        cand_pm[2 * p + 1] = s.pm[slot] + penalty(lv, 1)
        keep[2 * p] = 0
        keep[2 * p + 1] = 0

    if 2 * P <= s.L:
        for k in range(2 * P):
            keep[k] = 1
    else:
        # stable selection of the L smallest metrics
        for k in range(2 * P):
            cand_idx[k] = k
        for k in range(1, 2 * P):
            c = cand_idx[k]
            j = k - 1
            while j >= 0 and cand_pm[cand_idx[j]] > cand_pm[c]:
                cand_idx[j + 1] = cand_idx[j]
                j -= 1
            cand_idx[j + 1] = c
        for k in range(s.L):
            keep[cand_idx[k]] = 1

    for k in range(s.L):
        used[k] = 0
    for p in range(P):
        if keep[2 * p] or keep[2 * p + 1]:
            used[s.order[p]] = 1
    nfree = 0
    for k in range(s.L):
        if not used[k]:
            free_slots[nfree] = k
            nfree += 1

    nnew = 0
    q = 0
    for p in range(P):
        slot = s.order[p]
        if keep[2 * p] and keep[2 * p + 1]:
            c = free_slots[q]
            q += 1
            copy_path(s, slot, c, i)
            s.pm[slot] = cand_pm[2 * p]
            s.bits[slot * n2 + 1] = 0
            s.u[slot * s.n + i] = 0
            s.pm[c] = cand_pm[2 * p + 1]
            s.bits[c * n2 + 1] = 1
            s.u[c * s.n + i] = 1
            new_order[nnew] = slot
            new_order[nnew + 1] = c
            nnew += 2
        elif keep[2 * p] or keep[2 * p + 1]:
            b = 0 if keep[2 * p] else 1
            s.pm[slot] = cand_pm[2 * p + b]
            s.bits[slot * n2 + 1] = b
            s.u[slot * s.n + i] = b
            new_order[nnew] = slot
            nnew += 1
    for k in range(nnew):
        s.order[k] = new_order[k]
    s.npaths = nnew


cdef void decode_node(State *s, int N, int leaf0) nogil:
    cdef int n2 = 2 * s.n
    cdef int half, p, j, base
    cdef double *l
    cdef unsigned char *bt
    if N == 1:
        leaf_step(s, leaf0)
        return
    half = N >> 1
    for p in range(s.npaths):
        base = s.order[p] * n2
        l = &s.llr[base]
        for j in range(half):
            l[half + j] = f_exact(l[N + j], l[N + half + j])
    decode_node(s, half, leaf0)
    for p in range(s.npaths):
        base = s.order[p] * n2
        l = &s.llr[base]
        bt = &s.bits[base]
        for j in range(half):
            bt[N + j] = bt[half + j]
            if bt[half + j]:
                l[half + j] = l[N + half + j] - l[N + j]
            else:
                l[half + j] = l[N + half + j] + l[N + j]
    decode_node(s, half, leaf0 + half)
    for p in range(s.npaths):
        bt = &s.bits[s.order[p] * n2]
        for j in range(half):
            bt[N + j] ^= bt[half + j]
            bt[N + half + j] = bt[half + j]


def scl_decode(const double[::1] llr, const unsigned char[::1] frozen,
               const unsigned char[::1] frozen_values, int list_size):
    """Return the u-estimate of the best surviving path."""
    cdef int n = llr.shape[0]
    cdef int m = 0
    cdef int k, best
    cdef State s
    if list_size < 1 or list_size > MAX_LIST:
        raise ValueError(f"list size must be in [1, {MAX_LIST}]")
    while (1 << m) < n:
        m += 1
    s.n = n
    s.m = m
    s.L = list_size
    s.npaths = 1
    s.frozen = &frozen[0]
    s.fval = &frozen_values[0]
    s.llr = <double *> malloc(list_size * 2 * n * sizeof(double))
    s.bits = <unsigned char *> malloc(list_size * 2 * n)
    s.u = <unsigned char *> malloc(list_size * n)
    s.pm = <double *> malloc(list_size * sizeof(double))
    s.order = <int *> malloc(list_size * sizeof(int))
    out = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] out_v = out
    try:
        with nogil:
            s.order[0] = 0
            s.pm[0] = 0.0
            memcpy(&s.llr[n], &llr[0], n * sizeof(double))
            decode_node(&s, n, 0)
            best = s.order[0]
            for k in range(1, s.npaths):
                if s.pm[s.order[k]] < s.pm[best]:
                    best = s.order[k]
            memcpy(&out_v[0], &s.u[best * n], n)
    finally:
        free(s.llr)
        free(s.bits)
        free(s.u)
        free(s.pm)
        free(s.order)
    return out
