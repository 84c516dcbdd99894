"""Equiprobable Gray-coded quantization and the reliability-driven bit allocation.

Each used transform coefficient is equalized to N(0, 1), cut at standard-normal
quantiles into ``2**K`` equiprobable intervals and labelled with a Gray code.
``K`` per coefficient is the largest value whose correctness probability (noise
does not move the coefficient out of its interval) stays above a threshold set
by the tolerated number of erroneous coefficients.
"""

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp, ndtr
from scipy.stats import norm

K_MAX = 8
# beyond this many noise standard deviations the escape probability underflows
_TAIL_SIGMAS = 40.0


class FitError(ValueError):
    pass


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianFit:
    mean: float
    std: float
    aic: float
    aicc: float
    bic: float


def fit_gaussian(samples):
    """Gaussian fit with unbiased std and AIC/AICc/BIC scores.

    Scores use the log-likelihood at the ML estimates with k = 2 parameters.
    AICc is infinite for exactly 3 samples.
    """
    x = np.asarray(samples, dtype=float).ravel()
    m = x.size
    if m < 3:
        raise FitError(f"need at least 3 samples, got {m}")
    mu = x.mean()
    var_ml = np.mean((x - mu) ** 2)
    if var_ml == 0:
        raise FitError("samples have zero variance")
    loglik = -0.5 * m * (np.log(2 * np.pi * var_ml) + 1.0)
    k = 2
    aic = -2 * loglik + 2 * k
    aicc = aic + (2.0 * k * (k + 1) / (m - k - 1) if m > k + 1 else np.inf)
    bic = -2 * loglik + k * np.log(m)
    return GaussianFit(float(mu), float(x.std(ddof=1)), float(aic), float(aicc), float(bic))


def equalize(t, mu, sigma):
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")
    return (np.asarray(t, dtype=float) - mu) / sigma


@lru_cache(maxsize=None)
def _boundaries(K):
    b = norm.ppf(np.arange(2**K + 1) / 2**K)
    b = 0.5 * (b - b[::-1])  # exact symmetry about 0
    b.setflags(write=False)
    return b


def boundaries(K):
    """``b_k = Phi^{-1}(k / 2**K)`` for ``k = 0..2**K`` (endpoints ``∓inf``)."""
    if not isinstance(K, (int, np.integer)) or not 1 <= K <= K_MAX:
        raise ValueError(f"K must be an integer in [1, {K_MAX}]")
    return _boundaries(int(K))


def gray_code(index, K):
    """Binary-reflected Gray code of ``index`` as K bits, most significant first."""
    g = index ^ (index >> 1)
    return np.array([(g >> (K - 1 - j)) & 1 for j in range(K)], dtype=np.uint8)


@lru_cache(maxsize=None)
def _gray_table(K):
    t = np.vstack([gray_code(i, K) for i in range(2**K)])
    t.setflags(write=False)
    return t


def interval(t_hat, K):
    """1-based interval ``k`` with ``b_{k-1} < t <= b_k``."""
    b = boundaries(K)
    return np.searchsorted(b[1:-1], t_hat, side="left") + 1


def quantize(t_hat, K):
    """Return ``(k, bits)`` for one equalized value."""
    k = int(interval(float(t_hat), K))
    return k, _gray_table(K)[k - 1].copy()


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_PANELS = 48
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _escape_all(b_here, b_other, sigma, toward):
    """Probability that noise pushes ``t`` across boundary ``b_here`` from the
    interval whose far end is ``b_other``; ``toward`` is +1 when crossing
    upward.  Vectorized over boundaries.

    With ``t = b_here - toward * sigma * s`` the escape mass is
    ``sigma * int_0^S Q(s) phi(b_here - toward * sigma * s) ds``.  ``S`` stops
    at the interval's far end, where ``Q`` underflows, or where ``phi`` does,
    and the range is split into equal panels of Gauss-Legendre nodes.
    """
    width = np.abs(b_other - b_here) / sigma
    upper = np.minimum(np.minimum(width, _TAIL_SIGMAS), (np.abs(b_here) + _TAIL_SIGMAS) / sigma)
    h = upper / _PANELS
    # panel midpoints x node offsets
    mids = (np.arange(_PANELS) + 0.5)[None, :, None] * h[:, None, None]
    s = mids + 0.5 * h[:, None, None] * _GL_NODES[None, None, :]
    t = b_here[:, None, None] - toward * sigma * s
    vals = ndtr(-s) * np.exp(-0.5 * t * t) * _INV_SQRT_2PI
    return sigma * 0.5 * h * np.einsum("ipk,k->i", vals, _GL_WEIGHTS)


@lru_cache(maxsize=8192)
def _error_probability(K, sigma):
    b = boundaries(K)
    inner = b[1:-1]
    up = _escape_all(inner, b[:-2], sigma, +1)    # from below, crossing up
    down = _escape_all(inner, b[2:], sigma, -1)   # from above, crossing down
    return float(np.sum(up) + np.sum(down))


def correctness_probability(K, noise_std):
    """Probability that equalized noise of std ``noise_std`` keeps a N(0,1)
    coefficient inside its ``K``-bit quantization interval."""
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    boundaries(K)
    if noise_std == 0:
        return 1.0
    return 1.0 - _error_probability(int(K), float(noise_std))


def log_binomial_tail(l, c_max, p_bad):
    """``log Pr[Binomial(l, p_bad) > c_max]`` summed in log space."""
    if p_bad <= 0:
        return -np.inf
    if p_bad >= 1:
        return 0.0
    c = np.arange(c_max + 1, l + 1)
    terms = (gammaln(l + 1) - gammaln(c + 1) - gammaln(l - c + 1)
             + c * np.log(p_bad) + (l - c) * np.log1p(-p_bad))
    return float(logsumexp(terms))


def correctness_threshold(l, c_max, target_pb=1e-9, resolution=1e-6):
    """Smallest per-coefficient correctness probability ``P`` such that
    ``Pr[more than c_max of l coefficients fail] <= target_pb`` when each
    fails independently with probability ``1 - P``.

    The returned value is the upper end of a bisection bracket of width
    ``resolution``, so it always satisfies the tail bound.
    """
    if not 1 <= c_max < l:
        raise DesignError(f"need 1 <= C_max < l, got C_max={c_max}, l={l}")
    log_target = np.log(target_pb)
    ok = lambda P: log_binomial_tail(l, c_max, 1.0 - P) <= log_target
    lo, hi = 0.0, 1.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class CoefficientModel:
    mean: float
    std: float
    noise_std: float  # noise std after equalization, in units of std


def coefficient_models(plan_matrix, source_mean, source_autocov, noise_variance):
    """Per-coefficient Gaussian models implied by a source model.

    The transform is orthogonal, so i.i.d. source noise maps to i.i.d.
    coefficient noise of the same variance.
    """
    A = np.asarray(plan_matrix)
    mu = A @ np.asarray(source_mean, dtype=float)
    var = np.einsum("ij,jk,ik->i", A, np.asarray(source_autocov, dtype=float), A)
    std = np.sqrt(np.clip(var, 0.0, None))
    noise = np.sqrt(noise_variance)
    models = []
    for m, s in zip(mu, std):
        models.append(CoefficientModel(float(m), float(s), float(noise / s) if s > 0 else np.inf))
    return models


@dataclass(frozen=True)
class QuantizerDesign:
    c_max: int
    threshold: float
    target_pb: float
    bits: tuple
    n: int
    e: int

    @property
    def k_max(self):
        return max(self.bits) if self.bits else 0

    @property
    def d_min_required(self):
        return 2 * self.e + 1

    def to_json(self):
        return {"c_max": self.c_max, "threshold": self.threshold,
                "bits_per_coeff": list(self.bits), "n": self.n, "e": self.e,
                "dc_excluded": True}

    def content_hash(self):
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_json(cls, d, target_pb=1e-9):
        bits = tuple(int(b) for b in d["bits_per_coeff"])
        return cls(int(d["c_max"]), float(d["threshold"]), target_pb, bits,
                   int(d["n"]), int(d["e"]))


def required_correction(bits, c_max):
    """Worst case: the ``c_max`` coefficients carrying the most bits all fail."""
    return int(sum(sorted(bits, reverse=True)[:c_max]))


def max_bits(noise_std, threshold, k_max=K_MAX):
    """Largest K with ``P_c(K) >= threshold`` (0 if K = 1 already fails)."""
    K = 0
    while K < k_max and correctness_probability(K + 1, noise_std) >= threshold:
        K += 1
    return K


def allocate_bits(models, c_max, target_pb=1e-9, k_max=K_MAX):
    """Bit allocation for a fixed maximum number of erroneous coefficients.

    ``models[0]`` is the DC coefficient and is never used.
    """
    l = len(models)
    threshold = correctness_threshold(l, c_max, target_pb)
    bits = [0]
    for m in models[1:]:
        bits.append(0 if not np.isfinite(m.noise_std) else max_bits(m.noise_std, threshold, k_max))
    return QuantizerDesign(c_max, threshold, target_pb, tuple(bits), int(sum(bits)),
                           required_correction(bits, c_max))


def fixed_design(l, k=1, c_max=0, threshold=float("nan"), target_pb=1e-9):
    """``k`` bits from every coefficient except DC."""
    bits = (0,) + (k,) * (l - 1)
    return QuantizerDesign(c_max, threshold, target_pb, bits, sum(bits),
                           required_correction(bits, c_max))


def extract_bits(design, models, coeffs):
    """Equalize, quantize and concatenate Gray labels (coefficients with K=0 skipped).

    ``coeffs`` may be a batch with coefficients along the last axis.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1] != len(design.bits) or len(models) != len(design.bits):
        raise ValueError("coefficient count does not match the design")
    parts = []
    for i, K in enumerate(design.bits):
        if K == 0:
            continue
        t_hat = equalize(c[..., i], models[i].mean, models[i].std)
        k = interval(t_hat, K)
        parts.append(_gray_table(K)[k - 1])
    if not parts:
        return np.zeros(c.shape[:-1] + (0,), dtype=np.uint8)
    return np.concatenate(parts, axis=-1).astype(np.uint8)
