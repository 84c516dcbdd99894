"""Key-leakage-storage regions for binary sources over BSCs, and finite-length bounds.

Rates are in bits per source bit.  The auxiliary variable of the
generated/chosen-secret regions is parametrized by the crossover ``q`` of the
test channel ``U = X xor Bern(q)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.stats import norm


class Infeasible(ValueError):
    pass


def binary_entropy(p):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    h = np.where((p == 0) | (p == 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def star(q, p):
    """Crossover of two cascaded BSCs."""
    return q * (1 - p) + (1 - q) * p


@dataclass(frozen=True)
class RateTuple:
    key: float
    leakage: float
    storage: float


@dataclass(frozen=True)
class RegionBoundary:
    model: str
    p_a: float
    q: np.ndarray
    key: np.ndarray
    leakage: np.ndarray
    storage: np.ndarray

    def tuples(self):
        return [RateTuple(*v) for v in zip(self.key, self.leakage, self.storage)]

    def rows(self):
        return [(float(q), float(s), float(l), float(w))
                for q, s, l, w in zip(self.q, self.key, self.leakage, self.storage)]


def fcs_region_point(p):
    """Maximum key rate of the fuzzy commitment and its minimum leakage."""
    if not 0 <= p <= 0.5:
        raise ValueError("p must lie in [0, 0.5]")
    h = binary_entropy(p)
    return 1.0 - h, h


def _grid(q_grid):
    q = np.asarray(q_grid, dtype=float)
    if np.any((q < 0) | (q > 0.5)):
        raise ValueError("q grid must lie in [0, 0.5]")
    return q


def gs_region_boundary(p_a, q_grid):
    """Generated-secret boundary: ``(1 - h(q*p), h(q*p) - h(q), h(q*p) - h(q))``."""
    if not 0 <= p_a <= 0.5:
        raise ValueError("p_A must lie in [0, 0.5]")
    q = _grid(q_grid)
    hqp = binary_entropy(star(q, p_a))
    hq = binary_entropy(q)
    key = 1.0 - hqp
    leak = np.maximum(hqp - hq, 0.0)
    return RegionBoundary("GS", p_a, q, key, leak, leak.copy())


def cs_region_boundary(p_a, q_grid):
    """Chosen-secret boundary: leakage as GS, storage ``I(U;X) = 1 - h(q)``."""
    gs = gs_region_boundary(p_a, q_grid)
    storage = 1.0 - binary_entropy(gs.q)
    return RegionBoundary("CS", p_a, gs.q, gs.key, gs.leakage, storage)


def fcs_region_boundary(p_a, q_grid):
    """Fuzzy-commitment pairs ``(R_s, 1 - R_s)`` for ``R_s`` up to capacity,
    tabulated on the same grid as the GS key rate; storage is always 1."""
    gs = gs_region_boundary(p_a, q_grid)
    return RegionBoundary("FCS", p_a, gs.q, gs.key, 1.0 - gs.key, np.ones_like(gs.key))


REGIONS = {"GS": gs_region_boundary, "CS": cs_region_boundary, "FCS": fcs_region_boundary}


def code_point_fcs(n_c, k_c):
    if not 0 < k_c <= n_c:
        raise ValueError("need 0 < k <= n")
    r = k_c / n_c
    return r, 1.0 - r


def code_point_wz(n, key_length, helper_length):
    """``(R_s, R_l, R_w)`` of a nested-code design; leakage equals storage."""
    rw = helper_length / n
    return RateTuple(key_length / n, rw, rw)


def _gallager_e0(rho, p):
    """Gallager's E_0 for the BSC with uniform input, in nats."""
    s = 1.0 / (1.0 + rho)
    return rho * np.log(2.0) - (1.0 + rho) * np.log(p**s + (1 - p) ** s)


def sphere_packing_exponent(rate_nats, p, rho_max=1000.0):
    """``E_sp(R) = sup_{rho > 0} E_0(rho) - rho R`` (nats)."""
    if rate_nats <= 0:
        return np.inf
    res = optimize.minimize_scalar(lambda r: -(_gallager_e0(r, p) - r * rate_nats),
                                   bounds=(1e-12, rho_max), method="bounded",
                                   options={"xatol": 1e-10})
    return max(-res.fun, 0.0)


def sphere_packing_rate(n, p_a, target_pb, alphabet=2):
    """Largest rate (bits) the sphere-packing bound allows at length ``n``.

    Uses the finite-length form with the rate backed off by
    ``(ln 4 + |X| ln n) / n`` nats inside the exponent and requires
    ``n E_sp(R - backoff) >= -ln P_B``.
    """
    if n < 64:
        raise ValueError("n must be >= 64")
    if not 0 < p_a < 0.5 or not 0 < target_pb < 1:
        raise ValueError("need p_A in (0, 0.5) and P_B in (0, 1)")
    backoff = (np.log(4.0) + alphabet * np.log(n)) / n
    need = -np.log(target_pb)
    cap = 1.0 - binary_entropy(p_a)

    def slack(r_bits):
        return n * sphere_packing_exponent(r_bits * np.log(2.0) - backoff, p_a) - need

    hi = cap + backoff / np.log(2.0)
    lo = 1e-9
    if slack(lo) < 0:
        raise Infeasible(f"no positive rate meets P_B={target_pb:g} at n={n}")
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        if slack(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def sphere_packing_ratio(n, p_a, target_pb):
    """``(R_C_max, R_C_max / (1 - R_C_max))``: best key/storage ratio of a
    Slepian-Wolf construction that stores the full syndrome."""
    r = sphere_packing_rate(n, p_a, target_pb)
    return r, r / (1.0 - r)


def finite_length_normal_approx(n, p, target_pb):
    """Normal approximation ``C - sqrt(V/n) Q^{-1}(P_B) + log2(n) / (2n)`` for BSC(p)."""
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 < p < 0.5:
        raise ValueError("p must lie in (0, 0.5)")
    cap = 1.0 - binary_entropy(p)
    disp = p * (1 - p) * np.log2((1 - p) / p) ** 2
    return cap - np.sqrt(disp / n) * norm.isf(target_pb) + np.log2(n) / (2 * n)
