"""Narrow-sense binary BCH codes with bounded-minimum-distance decoding.

Bit ``j`` of a codeword is the coefficient of ``x**j``.  Encoding is
systematic: parity in positions ``0..n-k-1``, message in ``n-k..n-1``.
Decoding is syndrome computation, Berlekamp-Massey and a Chien search; a
locator whose degree exceeds ``t`` or does not match its root count is a
decoding failure.
"""

from functools import lru_cache

import numpy as np

# primitive polynomials, bit i = coefficient of x**i
PRIMITIVE_POLY = {3: 0b1011, 4: 0b10011, 5: 0b100101, 6: 0b1000011,
                  7: 0b10001001, 8: 0b100011101, 9: 0b1000010001,
                  10: 0b10000001001}


class UnsupportedCode(ValueError):
    pass


class DecodeFailure(Exception):
    """No codeword within the correction radius."""


class GF2m:
    """GF(2**m) with exp/log tables over a fixed primitive polynomial."""

    def __init__(self, m):
        if m not in PRIMITIVE_POLY:
            raise UnsupportedCode(f"no primitive polynomial tabulated for m={m}")
        self.m = m
        self.order = (1 << m) - 1
        poly = PRIMITIVE_POLY[m]
        exp = np.zeros(2 * self.order, dtype=np.int64)
        log = np.full(1 << m, -1, dtype=np.int64)
        a = 1
        for i in range(self.order):
            exp[i] = a
            log[a] = i
            a <<= 1
            if a >> m:
                a ^= poly
        exp[self.order:] = exp[: self.order]
        self.exp = exp
        self.log = log

    def mul(self, a, b):
        if a == 0 or b == 0:
            return 0
        return int(self.exp[self.log[a] + self.log[b]])

    def inv(self, a):
        return int(self.exp[(self.order - self.log[a]) % self.order])

    def minimal_polynomial(self, i):
        """Minimal polynomial of alpha**i as an int over GF(2)."""
        coset = []
        j = i % self.order
        while j not in coset:
            coset.append(j)
            j = (2 * j) % self.order
        # product of (x - alpha**j), coefficients in GF(2**m), low degree first
        poly = [1]
        for j in coset:
            root = int(self.exp[j])
            nxt = [0] * (len(poly) + 1)
            for d, c in enumerate(poly):
                nxt[d + 1] ^= c
                nxt[d] ^= self.mul(c, root)
            poly = nxt
        assert all(c in (0, 1) for c in poly)
        return sum(c << d for d, c in enumerate(poly)), tuple(coset)


def _gf2_mul(a, b):
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def _gf2_mod(a, g):
    dg = g.bit_length() - 1
    while a and a.bit_length() - 1 >= dg:
        a ^= g << (a.bit_length() - 1 - dg)
    return a


class BCHCode:
    """Binary narrow-sense BCH code of length ``2**m - 1`` correcting ``t`` errors."""

    def __init__(self, m, t):
        self.field = GF2m(m)
        self.n = self.field.order
        self.t = t
        if not 1 <= t or 2 * t >= self.n:
            raise UnsupportedCode(f"t={t} invalid for n={self.n}")
        g = 1
        seen = set()
        for i in range(1, 2 * t + 1):
            mp, coset = self.field.minimal_polynomial(i)
            if coset[0] in seen or any(c in seen for c in coset):
                continue
            seen.update(coset)
            g = _gf2_mul(g, mp)
        self.generator = g
        self.k = self.n - (g.bit_length() - 1)
        if self.k < 1:
            raise UnsupportedCode(f"t={t} leaves no message bits at n={self.n}")
        # consecutive roots may run past 2t; widen t to the full BCH bound
        while 2 * self.t + 1 < self.n and (2 * self.t + 1) in seen and (2 * self.t + 2) % self.n in seen:
            self.t += 1
        self.d = 2 * self.t + 1
        r = self.n - self.k
        parity = np.zeros((self.k, r), dtype=np.uint8)
        for i in range(self.k):
            rem = _gf2_mod(1 << (r + i), g)
            parity[i] = [(rem >> j) & 1 for j in range(r)]
        self._parity = parity
        self._positions = np.arange(self.n)

    @property
    def name(self):
        return f"bch_{self.n}_{self.k}"

    def __repr__(self):
        return f"BCHCode(n={self.n}, k={self.k}, d={self.d}, t={self.t})"

    def encode(self, message):
        msg = np.asarray(message, dtype=np.uint8)
        if msg.shape[-1] != self.k:
            raise ValueError(f"message length {msg.shape[-1]} != k={self.k}")
        par = (msg.astype(np.int64) @ self._parity) & 1
        return np.concatenate([par.astype(np.uint8), msg & 1], axis=-1)

    def message_of(self, codeword):
        return np.asarray(codeword, dtype=np.uint8)[..., self.n - self.k:]

    def syndromes(self, word):
        """``S_j = r(alpha**j)`` for ``j = 1..2t`` as field elements."""
        f = self.field
        pos = self._positions[np.asarray(word, dtype=np.uint8) == 1]
        if pos.size == 0:
            return np.zeros(2 * self.t, dtype=np.int64)
        j = np.arange(1, 2 * self.t + 1)
        powers = f.exp[(np.outer(j, pos)) % self.n]
        return np.bitwise_xor.reduce(powers, axis=1)

    def _berlekamp_massey(self, S):
        f = self.field
        C = [1]
        B = [1]
        L = 0
        m = 1
        b = 1
        for r in range(len(S)):
            d = int(S[r])
            for i in range(1, L + 1):
                if i < len(C):
                    d ^= f.mul(C[i], int(S[r - i]))
            if d == 0:
                m += 1
                continue
            coef = f.mul(d, f.inv(b))
            T = list(C)
            shifted = [0] * m + [f.mul(coef, x) for x in B]
            if len(shifted) > len(C):
                C = C + [0] * (len(shifted) - len(C))
            for i, x in enumerate(shifted):
                C[i] ^= x
            if 2 * L <= r:
                L = r + 1 - L
                B = T
                b = d
                m = 1
            else:
                m += 1
        while len(C) > 1 and C[-1] == 0:
            C.pop()
        return C, L

    def error_positions(self, word):
        """Error positions for ``word``; raises DecodeFailure beyond radius t."""
        S = self.syndromes(word)
        if not S.any():
            return np.zeros(0, dtype=np.int64)
        f = self.field
        C, L = self._berlekamp_massey(S)
        deg = len(C) - 1
        if deg != L or deg > self.t:
            raise DecodeFailure("error locator degree exceeds correction radius")
        # Chien search: Lambda(alpha**-i) == 0  <=>  error at position i
        logs = f.log[np.array(C, dtype=np.int64)]
        nz = np.flatnonzero(np.array(C) != 0)
        i = self._positions
        terms = f.exp[(logs[nz][:, None] - np.outer(nz, i)) % self.n]
        values = np.bitwise_xor.reduce(terms, axis=0)
        roots = np.flatnonzero(values == 0)
        if roots.size != deg:
            raise DecodeFailure("error locator does not split over the field")
        return roots

    def decode(self, word):
        """BMDD: the message of the codeword within distance t, or DecodeFailure."""
        w = np.array(word, dtype=np.uint8) & 1
        if w.shape != (self.n,):
            raise ValueError(f"word length {w.shape} != n={self.n}")
        w[self.error_positions(w)] ^= 1
        if self.syndromes(w).any():
            raise DecodeFailure("corrected word is not a codeword")
        return self.message_of(w).copy()

    def try_decode(self, word):
        """Like :meth:`decode` but returns ``None`` on failure."""
        try:
            return self.decode(word)
        except DecodeFailure:
            return None


@lru_cache(maxsize=None)
def bch_code(n, k):
    """Look up a narrow-sense BCH code by ``(n, k)``."""
    m = int(n + 1).bit_length() - 1
    if (1 << m) - 1 != n or m not in PRIMITIVE_POLY:
        raise UnsupportedCode(f"unsupported BCH length {n}")
    for t in range(1, n // 2 + 1):
        try:
            c = BCHCode(m, t)
        except UnsupportedCode:
            break
        if c.k == k:
            return BCHCode(m, c.t)
        if c.k < k:
            break
    raise UnsupportedCode(f"no narrow-sense binary BCH code with n={n}, k={k}")


def bch_by_name(name):
    _, n, k = name.split("_")
    return bch_code(int(n), int(k))


def bch_table(m):
    """All narrow-sense BCH ``(n, k, t)`` for length ``2**m - 1``, strongest last."""
    out = []
    seen = set()
    for t in range(1, (1 << m) // 2):
        try:
            c = BCHCode(m, t)
        except UnsupportedCode:
            break
        if c.k in seen:
            continue
        seen.add(c.k)
        out.append((c.n, c.k, c.t))
    return out
