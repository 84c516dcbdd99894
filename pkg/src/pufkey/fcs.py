"""Fuzzy-commitment key binding and exact block-error evaluation.

Enrollment stores ``W = encode(S) xor X``; reconstruction decodes ``W xor Y``.
The block-error probability of a bounded-distance decoder over independent,
non-identically distributed bit errors is a Poisson-binomial tail, computed
from the characteristic function with one DFT.
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.fft

from .bch import BCHCode, DecodeFailure, bch_by_name


class LinearCode:
    """Small binary linear code given by a generator matrix, decoded by
    exhaustive nearest-codeword search within radius ``t``."""

    def __init__(self, generator, name=None):
        G = np.asarray(generator, dtype=np.uint8) & 1
        self.G = G
        self.k, self.n = G.shape
        msgs = np.array(list(itertools.product([0, 1], repeat=self.k)), dtype=np.uint8)
        self._msgs = msgs
        self._words = (msgs.astype(np.int64) @ G) & 1
        if len({tuple(w) for w in self._words}) != 2**self.k:
            raise ValueError("generator matrix is not full rank")
        wts = self._words.sum(axis=1)
        self.d = int(wts[wts > 0].min()) if self.k else self.n
        self.t = (self.d - 1) // 2
        self.name = name or f"linear_{self.n}_{self.k}"

    def encode(self, message):
        return ((np.asarray(message, dtype=np.int64) @ self.G) & 1).astype(np.uint8)

    def decode(self, word):
        dist = (self._words != np.asarray(word, dtype=np.uint8)).sum(axis=1)
        best = int(np.argmin(dist))
        if dist[best] > self.t:
            raise DecodeFailure("no codeword within radius")
        return self._msgs[best].copy()


def repetition_code(n):
    return LinearCode(np.ones((1, n), dtype=np.uint8), name=f"rep_{n}")


def resolve_code(code):
    if isinstance(code, str):
        return bch_by_name(code)
    return code


@dataclass(frozen=True)
class EnrollmentRecord:
    helper: np.ndarray
    code: str
    quantizer_hash: str = ""
    scheme: str = "FCS"

    def to_json(self):
        return {"scheme": self.scheme, "code": self.code,
                "helper_hex": pack_bits(self.helper), "n_bits": int(self.helper.size),
                "quantizer_hash": self.quantizer_hash}

    @classmethod
    def from_json(cls, d):
        return cls(unpack_bits(d["helper_hex"], int(d["n_bits"])), d["code"],
                   d.get("quantizer_hash", ""), d.get("scheme", "FCS"))


def pack_bits(bits):
    """MSB-first packing to hex; the last byte is zero-padded."""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes().hex()


def unpack_bits(hexstr, n):
    return np.unpackbits(np.frombuffer(bytes.fromhex(hexstr), dtype=np.uint8))[:n].copy()


def fcs_enroll(code, x, secret, quantizer_hash=""):
    code = resolve_code(code)
    x = np.asarray(x, dtype=np.uint8)
    if x.shape != (code.n,):
        raise ValueError(f"PUF bits length {x.shape} != n={code.n}")
    helper = code.encode(secret) ^ x
    return EnrollmentRecord(helper.astype(np.uint8), code.name, quantizer_hash)


def fcs_reconstruct(code, record, y):
    """Decode ``W xor y``; returns the key or ``None`` on decoding failure."""
    code = resolve_code(code)
    y = np.asarray(y, dtype=np.uint8)
    if y.shape != (code.n,) or record.helper.shape != (code.n,):
        raise ValueError("length mismatch between code, helper data and PUF bits")
    try:
        return code.decode(record.helper ^ y)
    except DecodeFailure:
        return None


@dataclass(frozen=True)
class ErrorProfile:
    """Per-symbol correctness probabilities and the bit weight of each symbol.

    ``weights`` all 1 is the one-bit-per-coefficient regime; otherwise a
    coefficient in error flips all of its ``weights[i]`` bits.
    """

    correct: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        p = np.asarray(self.correct, dtype=float)
        if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must lie in [0, 1]")
        w = np.ones(p.size, dtype=np.int64) if self.weights is None else np.asarray(self.weights, dtype=np.int64)
        if w.shape != p.shape or np.any(w < 0):
            raise ValueError("weights must be nonnegative and match the probabilities")
        object.__setattr__(self, "correct", p)
        object.__setattr__(self, "weights", w)

    @property
    def total_bits(self):
        return int(self.weights.sum())

    @classmethod
    def from_design(cls, correct, bits, grouped=True):
        """Profile for the used coefficients of a quantizer design."""
        bits = np.asarray(bits)
        used = bits > 0
        c = np.asarray(correct, dtype=float)[used]
        if grouped:
            return cls(c, bits[used])
        return cls(c)


def error_pmf(profile):
    """Distribution of the number of bit errors via the DFT of the characteristic function.

    The characteristic function is accumulated as a sum of log-magnitudes and
    phases of the per-symbol factors, so long products neither underflow nor
    lose phase precision.  Work is done in extended precision (x87 long
    double where the platform has it) and rounded to float64 at the end.
    """
    ld = np.longdouble
    q = 1 - np.asarray(profile.correct, dtype=ld)
    w = profile.weights.astype(ld)
    N = profile.total_bits + 1
    two_pi = 8 * np.arctan(ld(1))
    omega = two_pi * np.arange(N, dtype=ld) / N
    # factor_j(l) = (1 - q_j) + q_j exp(i omega_l w_j)
    phase = np.outer(w, omega)
    re = (1 - q)[:, None] + q[:, None] * np.cos(phase)
    im = q[:, None] * np.sin(phase)
    logmag = np.log(re * re + im * im) / 2
    arg = np.arctan2(im, re)
    total_arg = arg.sum(axis=0)
    mag = np.exp(logmag.sum(axis=0))
    cf = mag * np.cos(total_arg) + 1j * (mag * np.sin(total_arg))
    return scipy.fft.fft(cf.astype(np.clongdouble)).real / N


def block_error_exact(profile, t):
    """``Pr[number of bit errors > t]`` for independent symbol errors."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t >= profile.total_bits:
        return 0.0
    pmf = error_pmf(profile)
    tail = float(np.sum(np.sort(pmf[t + 1:])))
    return min(max(tail, 0.0), 1.0)


def block_error_convolution(profile, t):
    """Exact rational dynamic-programming oracle for :func:`block_error_exact`."""
    dist = [Fraction(1)]
    for pc, w in zip(profile.correct, profile.weights):
        pc = Fraction(float(pc))
        nxt = [Fraction(0)] * (len(dist) + int(w))
        for k, v in enumerate(dist):
            nxt[k] += v * pc
            nxt[k + int(w)] += v * (1 - pc)
        dist = nxt
    return float(sum(dist[t + 1:], Fraction(0)))


def _mutual_information(joint):
    joint = np.asarray(joint, dtype=float)
    ps = joint.sum(axis=1, keepdims=True)
    pw = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (ps @ pw)[nz])))


def fcs_secrecy_audit(code, x_bias=0.5, max_states=2**16):
    """Exact ``I(S; W)`` in bits for uniform S and i.i.d. Bern(x_bias) PUF bits.

    Enumerates every (S, X) pair, so only toy codes are accepted.
    """
    code = resolve_code(code)
    if 2 ** (code.n + code.k) > max_states:
        raise ValueError(f"2^(n+k) = {2 ** (code.n + code.k)} states is too many to enumerate")
    msgs = list(itertools.product([0, 1], repeat=code.k))
    xs = np.array(list(itertools.product([0, 1], repeat=code.n)), dtype=np.uint8)
    wx = xs.sum(axis=1)
    px = (x_bias ** wx) * ((1 - x_bias) ** (code.n - wx))
    index = 1 << np.arange(code.n - 1, -1, -1)
    joint = np.zeros((len(msgs), 2**code.n))
    for si, s in enumerate(msgs):
        c = code.encode(np.array(s, dtype=np.uint8))
        widx = ((xs ^ c) @ index).astype(np.int64)
        np.add.at(joint[si], widx, px / len(msgs))
    return _mutual_information(joint)
