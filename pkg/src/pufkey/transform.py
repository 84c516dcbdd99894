"""Orthonormal 2D transforms of RO arrays and decorrelation efficiency."""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.linalg


class TransformError(ValueError):
    pass


class UndefinedMetric(ValueError):
    """Decorrelation efficiency with no off-diagonal mass in the source."""


class Kind(str, Enum):
    DCT = "dct"
    DWHT = "dwht"
    DHT = "dht"
    KLT = "klt"


def _is_pow2(k):
    return k >= 1 and not k & (k - 1)


@lru_cache(maxsize=None)
def dct_matrix(n):
    return scipy.fft.dct(np.eye(n), norm="ortho", axis=0)


@lru_cache(maxsize=None)
def walsh_hadamard_matrix(n):
    """Natural-ordered Hadamard matrix scaled to be orthogonal."""
    return scipy.linalg.hadamard(n).astype(float) / np.sqrt(n)


@lru_cache(maxsize=None)
def haar_matrix(n):
    """Orthonormal Haar matrix; row 0 is the scaled mean, then coarse-to-fine."""
    h = np.array([[1.0]])
    while h.shape[0] < n:
        k = h.shape[0]
        top = np.kron(h, [1.0, 1.0])
        bottom = np.kron(np.eye(k), [1.0, -1.0])
        h = np.vstack([top, bottom]) / np.sqrt(2.0)
    return h


_MATRICES = {Kind.DCT: dct_matrix, Kind.DWHT: walsh_hadamard_matrix, Kind.DHT: haar_matrix}


@dataclass(frozen=True)
class TransformPlan:
    kind: Kind
    rows: int
    cols: int
    klt_basis: np.ndarray = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.rows < 1 or self.cols < 1:
            raise TransformError("rows and cols must be positive")
        if kind in (Kind.DWHT, Kind.DHT) and not (_is_pow2(self.rows) and _is_pow2(self.cols)):
            raise TransformError(f"{kind.value} needs power-of-two sizes, got {self.rows}x{self.cols}")
        if kind is Kind.KLT:
            if self.klt_basis is None:
                raise TransformError("KLT plan needs a basis (see fit_klt)")
            B = np.asarray(self.klt_basis, dtype=float)
            l = self.rows * self.cols
            if B.shape != (l, l):
                raise TransformError(f"KLT basis must be {l}x{l}")
            if not np.allclose(B.T @ B, np.eye(l), atol=1e-8):
                raise TransformError("KLT basis is not orthogonal")
            object.__setattr__(self, "klt_basis", B)

    @property
    def size(self):
        return self.rows * self.cols

    def matrix(self):
        """The ``l x l`` orthogonal matrix ``A`` with ``coeffs = A @ x`` (row-major)."""
        if self.kind is Kind.KLT:
            return self.klt_basis.T
        f = _MATRICES[self.kind]
        return np.kron(f(self.rows), f(self.cols))


def _as_grid(plan, a):
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != plan.size:
        raise TransformError(f"array length {a.shape[-1]} != {plan.size}")
    return a


def forward(plan, array):
    """Transform coefficients, row-major; accepts a batch along leading axes."""
    a = _as_grid(plan, array)
    if plan.kind is Kind.KLT:
        return a @ plan.klt_basis
    f = _MATRICES[plan.kind]
    grid = a.reshape(*a.shape[:-1], plan.rows, plan.cols)
    out = f(plan.rows) @ grid @ f(plan.cols).T
    return out.reshape(a.shape)


def inverse(plan, coeffs):
    c = _as_grid(plan, coeffs)
    if plan.kind is Kind.KLT:
        return c @ plan.klt_basis.T
    f = _MATRICES[plan.kind]
    grid = c.reshape(*c.shape[:-1], plan.rows, plan.cols)
    out = f(plan.rows).T @ grid @ f(plan.cols)
    return out.reshape(c.shape)


def fit_klt(autocovariance):
    """Eigenvectors as columns, by descending eigenvalue, with a fixed sign.

    Each column is flipped so its largest-magnitude entry is positive (the
    first such entry on ties).
    """
    C = np.asarray(autocovariance, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise TransformError("autocovariance must be square")
    if not np.allclose(C, C.T, atol=1e-12 * max(1.0, np.abs(C).max())):
        raise TransformError("autocovariance is not symmetric")
    w, v = np.linalg.eigh(0.5 * (C + C.T))
    idx = np.argsort(-w, kind="stable")
    v = v[:, idx]
    mags = np.abs(v)
    # round so ties in magnitude survive floating-point noise
    pivot = np.argmax(np.round(mags, 12) >= np.round(mags.max(axis=0), 12), axis=0)
    signs = np.sign(v[pivot, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def coefficient_covariance(plan, source_autocov):
    """Analytic ``A C A^T`` for the plan's transform matrix."""
    A = plan.matrix()
    return A @ np.asarray(source_autocov, dtype=float) @ A.T


def off_diagonal_mass(C):
    C = np.abs(np.asarray(C, dtype=float))
    return C.sum() - np.trace(C)


def decorrelation_efficiency(coeff_autocov, source_autocov):
    """``1 - offdiag|C_TT| / offdiag|C_XX|``."""
    coeff_autocov = np.asarray(coeff_autocov)
    source_autocov = np.asarray(source_autocov)
    if coeff_autocov.shape != source_autocov.shape or coeff_autocov.ndim != 2:
        raise TransformError("covariance matrices must have equal square shapes")
    denom = off_diagonal_mass(source_autocov)
    if denom <= 0:
        raise UndefinedMetric("source covariance has no off-diagonal mass")
    return 1.0 - off_diagonal_mass(coeff_autocov) / denom


def coefficient_label(plan, flat_index):
    """1-based label: row 1 column 1 is 1 and labels run along each row."""
    return int(flat_index) + 1


def make_plan(kind, rows, cols, autocovariance=None):
    kind = Kind(kind)
    basis = fit_klt(autocovariance) if kind is Kind.KLT else None
    return TransformPlan(kind, rows, cols, basis)
