"""Nested polar codes for key generation from a binary source with side information.

``C`` (frozen set ``F``) is the channel code and ``C1`` (frozen set
``F1``, a subset of ``F``) the vector quantizer.  Enrollment quantizes the
PUF bits to a codeword of ``C1``; the bits of the quantizer's ``u`` on
``Fw = F - F1`` are the helper data and the bits on the unfrozen positions
are the key.  Reconstruction decodes ``C`` with ``F1 -> 0`` and ``Fw -> W``.
"""

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import rates
from ..seeding import rng
from .core import bsc_llr, construct_frozen_set, polar_transform, scl_decode


class InfeasibleDesign(RuntimeError):
    """Raised with the partial :class:`DesignReport` attached as ``report``."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def distortion_from_pc(p_c, p_a):
    """Quantization distortion ``E[q]`` with ``E[q] * p_A = p_c``."""
    if not 0 <= p_a < 0.5:
        raise ValueError("p_A must lie in [0, 0.5)")
    if not p_c < 0.5:
        raise ValueError("p_c must be below 0.5")
    if p_c < p_a:
        raise ValueError(f"p_c={p_c} < p_A={p_a} would need negative distortion")
    return (p_c - p_a) / (1.0 - 2.0 * p_a)


@dataclass(frozen=True)
class NestedPolarSpec:
    n: int
    f1: tuple
    fw: tuple
    list_size: int = 8
    design: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 2 or n & (n - 1):
            raise ValueError(f"n must be a power of two, got {n}")
        f1 = tuple(sorted(int(i) for i in self.f1))
        fw = tuple(sorted(int(i) for i in self.fw))
        both = set(f1) | set(fw)
        if len(both) != len(f1) + len(fw) or len(set(f1)) != len(f1) or len(set(fw)) != len(fw):
            raise ValueError("F1 and Fw must be disjoint sets of distinct indices")
        if both and (min(both) < 0 or max(both) >= n):
            raise ValueError("frozen indices out of range")
        if n - len(both) < 1:
            raise ValueError("key length must be at least 1")
        if self.list_size < 1:
            raise ValueError("list size must be >= 1")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "fw", fw)

    @property
    def m1(self):
        return len(self.f1)

    @property
    def m2(self):
        return len(self.fw)

    @property
    def key_length(self):
        return self.n - self.m1 - self.m2

    @property
    def frozen_c(self):
        return tuple(sorted(self.f1 + self.fw))

    @property
    def info(self):
        mask = np.ones(self.n, dtype=bool)
        mask[list(self.f1 + self.fw)] = False
        return np.flatnonzero(mask)

    @property
    def rates(self):
        """``(R_s, R_w)``."""
        return self.key_length / self.n, self.m2 / self.n

    def to_json(self):
        return {"n": self.n, "frozen_f1": list(self.f1), "frozen_fw": list(self.fw),
                "list_size": self.list_size, "key_length": self.key_length,
                "design": dict(self.design)}

    @classmethod
    def from_json(cls, d):
        spec = cls(int(d["n"]), tuple(d["frozen_f1"]), tuple(d["frozen_fw"]),
                   int(d.get("list_size", 8)), dict(d.get("design", {})))
        if "key_length" in d and int(d["key_length"]) != spec.key_length:
            raise ValueError("key_length does not match the frozen sets")
        return spec

    def spec_hash(self):
        core = {k: v for k, v in self.to_json().items() if k != "design"}
        blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class WZEnrollment:
    helper: np.ndarray
    secret: np.ndarray
    x_q: np.ndarray
    distortion: float

    def record(self, spec):
        from ..fcs import pack_bits

        return {"scheme": "WZ-polar", "spec_hash": spec.spec_hash(),
                "helper_hex": pack_bits(self.helper), "n_bits": int(self.helper.size)}


def helper_from_record(spec, record):
    from ..fcs import unpack_bits

    if record.get("scheme") != "WZ-polar":
        raise ValueError("not a WZ-polar enrollment record")
    if record.get("spec_hash") != spec.spec_hash():
        raise ValueError("enrollment record was made for a different code spec")
    return unpack_bits(record["helper_hex"], spec.m2)


def wz_enroll(spec, x, q):
    """Quantize ``x`` with the list decoder of ``C1`` treating it as BSC(q) output."""
    x = np.asarray(x, dtype=np.uint8)
    if x.shape != (spec.n,):
        raise ValueError(f"source length {x.shape} != n={spec.n}")
    u = scl_decode(bsc_llr(x, q), dict.fromkeys(spec.f1, 0), spec.list_size)
    x_q = polar_transform(u)
    return WZEnrollment(helper=u[list(spec.fw)].copy(), secret=u[spec.info].copy(),
                        x_q=x_q, distortion=float(np.count_nonzero(x_q != x)) / spec.n)


def wz_reconstruct(spec, y, helper, p_total):
    """Decode ``C`` with ``F1 -> 0`` and ``Fw -> helper`` from ``y`` seen through BSC(p_total)."""
    y = np.asarray(y, dtype=np.uint8)
    helper = np.asarray(helper, dtype=np.uint8)
    if y.shape != (spec.n,) or helper.shape != (spec.m2,):
        raise ValueError("length mismatch between spec, helper data and source")
    frozen = dict.fromkeys(spec.f1, 0)
    frozen.update(zip(spec.fw, helper.tolist()))
    return scl_decode(bsc_llr(y, p_total), frozen, spec.list_size)[spec.info]


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class ErrorEstimate:
    p: float
    trials: int
    errors: int

    @property
    def rate(self):
        return self.errors / self.trials if self.trials else float("nan")


def channel_block_errors(n, frozen, p, trials, seed, list_size=8, min_errors=None):
    """Block errors of the code with frozen set ``frozen`` (zeros) over BSC(p).

    Stops early once ``min_errors`` errors have been seen.
    """
    frozen = np.asarray(frozen, dtype=np.int64)
    info = np.setdiff1d(np.arange(n), frozen)
    fmap = dict.fromkeys(frozen.tolist(), 0)
    r = rng(seed, "trials", "channel", int(round(p * 1e9)))
    errors = done = 0
    mag = math.log((1 - p) / p)
    while done < trials:
        u = np.zeros(n, dtype=np.uint8)
        u[info] = r.integers(0, 2, info.size, dtype=np.uint8)
        y = polar_transform(u) ^ (r.random(n) < p).astype(np.uint8)
        u_hat = scl_decode(mag * (1.0 - 2.0 * y), fmap, list_size)
        errors += bool(np.any(u_hat[info] != u[info]))
        done += 1
        if min_errors is not None and errors >= min_errors:
            break
    return ErrorEstimate(float(p), done, errors)


def _random_sources(n, trials, seed):
    return rng(seed, "trials", "sources").integers(0, 2, (trials, n), dtype=np.uint8)


def mean_vq_distortion(n, f1, q, sources, list_size=8):
    """Average distortion of quantizing each row of ``sources`` with frozen set ``f1``."""
    return float(np.mean(vq_distortions(n, f1, q, sources, list_size)))


def vq_distortions(n, f1, q, sources, list_size=8):
    fmap = dict.fromkeys(np.asarray(f1, dtype=np.int64).tolist(), 0)
    out = np.empty(len(sources))
    for i, x in enumerate(sources):
        u = scl_decode(bsc_llr(x, q), fmap, list_size)
        out[i] = np.count_nonzero(polar_transform(u) != x) / n
    return out


# ---------------------------------------------------------------- design


@dataclass
class DesignReport:
    n: int
    key_length: int
    p_a: float
    target_pb: float
    feasible: bool = True
    reason: str = ""
    sphere_packing_rate: float = float("nan")
    sweep: list = field(default_factory=list)
    p_c: float = float("nan")
    p_c_method: str = ""
    e_q: float = float("nan")
    shrink_path: list = field(default_factory=list)
    m1: int = 0
    m2: int = 0
    e_q_measured: float = float("nan")

    def to_json(self):
        d = dict(self.__dict__)
        d["sweep"] = [{"p": e.p, "trials": e.trials, "errors": e.errors} for e in self.sweep]
        d["shrink_path"] = [{"m1": m, "distortion": v} for m, v in self.shrink_path]
        return d


def _interp_log(p0, r0, p1, r1, target):
    """``p`` where the line through ``(p0, log r0)`` and ``(p1, log r1)`` hits ``log target``."""
    l0, l1, lt = math.log(r0), math.log(r1), math.log(target)
    if l1 == l0:
        return 0.5 * (p0 + p1)
    return p0 + (lt - l0) * (p1 - p0) / (l1 - l0)


def find_crossover(n, frozen, p_a, target_pb, seed, list_size=8, step=0.01,
                   min_errors=20, max_trials=20_000):
    """Crossover ``p_c`` at which the channel code reaches ``target_pb``.

    Sweeps downward from the crossover at which the code rate equals capacity,
    estimating each point until ``min_errors`` errors or ``max_trials`` trials.
    Returns ``(p_c, method, sweep)`` with method ``interpolated`` when the
    target lies between two measured points and ``extrapolated`` when it lies
    below the smallest reliably measured rate; ``p_c`` is ``None`` when the
    code misses the target already at ``p_a``.
    """
    rate = 1.0 - len(frozen) / n
    # crossover where capacity equals the rate
    lo, hi = 0.0, 0.5
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if 1.0 - rates.binary_entropy(mid) > rate:
            lo = mid
        else:
            hi = mid
    p = math.floor(lo / step) * step
    sweep = []
    reliable = []
    while True:
        p = round(p, 10)
        if p <= p_a:
            est = channel_block_errors(n, frozen, p_a, max_trials, seed, list_size, min_errors)
            sweep.append(est)
            if est.rate > target_pb and est.errors >= min_errors:
                return None, "infeasible", sweep
            if est.errors > 0 and est.rate <= target_pb:
                break
            # too few errors at p_A to say: extrapolate from above
            break
        est = channel_block_errors(n, frozen, p, max_trials, seed, list_size, min_errors)
        sweep.append(est)
        if est.errors >= min_errors:
            reliable.append(est)
            if est.rate <= target_pb:
                break
        else:
            break
        p -= step
    last = sweep[-1]
    above = [e for e in reliable if e.rate > target_pb]
    if last.errors > 0 and last.rate <= target_pb and above:
        hi_e = min(above, key=lambda e: e.p)
        p_c = _interp_log(last.p, last.rate, hi_e.p, hi_e.rate, target_pb)
        return p_c, "interpolated", sweep
    pts = sorted(above, key=lambda e: e.p)[:2]
    if len(pts) < 2:
        raise RuntimeError("sweep produced fewer than two usable points; raise max_trials")
    p_c = _interp_log(pts[0].p, pts[0].rate, pts[1].p, pts[1].rate, target_pb)
    if last.errors == 0 and target_pb * last.trials >= 3.0:
        # zero errors where the target predicts several: the crossing is above last.p
        p_c = max(p_c, last.p)
    return p_c, "extrapolated", sweep


def design_nested(n, key_length, p_a, target_pb, seed=0, list_size=8,
                  construction_p=None, mc_trials=20_000, vq_trials=200,
                  p_c=None, sweep_kwargs=None):
    """Three-step nested polar design; returns ``(spec, report)``.

    1. Rank bit channels on BSC(construction_p) (default ``p_a``) and freeze
       the ``n - key_length`` least reliable ones as ``F``.
    2. Find the crossover ``p_c`` at which ``C`` reaches ``target_pb``
       (skipped when ``p_c`` is given).
    3. Shrink ``F1`` from ``F`` by releasing its most reliable indices until
       the mean quantization distortion is at most ``E[q]``.

    A sphere-packing check runs first: if ``key_length / n`` exceeds the
    largest rate that can reach ``target_pb`` even at ``p_a``, the design is
    infeasible.  Raises :class:`InfeasibleDesign`.
    """
    if n < 2 or n & (n - 1):
        raise ValueError("n must be a power of two")
    if not 1 <= key_length < n:
        raise ValueError("need 1 <= key_length < n")
    report = DesignReport(n, key_length, float(p_a), float(target_pb))
    if n >= 64:
        try:
            report.sphere_packing_rate = rates.sphere_packing_rate(n, p_a, target_pb)
        except rates.Infeasible:
            report.sphere_packing_rate = 0.0
        if key_length / n > report.sphere_packing_rate:
            report.feasible = False
            report.reason = (f"key rate {key_length / n:.4f} exceeds the sphere-packing limit "
                             f"{report.sphere_packing_rate:.4f} at n={n}, p_A={p_a}")
            raise InfeasibleDesign(report.reason, report)

    ranking, frozen = construct_frozen_set(n, construction_p or p_a, n - key_length,
                                           mc_trials=mc_trials, seed=seed)
    if p_c is None:
        p_c, method, sweep = find_crossover(n, frozen, p_a, target_pb, seed, list_size,
                                            **(sweep_kwargs or {}))
        report.sweep = sweep
        report.p_c_method = method
        if p_c is None or p_c <= p_a:
            report.feasible = False
            report.reason = f"code of rate {key_length}/{n} misses P_B={target_pb:g} already at p_A={p_a}"
            raise InfeasibleDesign(report.reason, report)
    else:
        report.p_c_method = "given"
    report.p_c = float(p_c)
    e_q = distortion_from_pc(p_c, p_a)
    report.e_q = e_q

    # F ordered least reliable first; F1 is always a prefix
    in_f = np.zeros(n, dtype=bool)
    in_f[frozen] = True
    f_order = ranking.order[in_f[ranking.order]]
    sources = _random_sources(n, vq_trials, seed)
    cache = {}

    def distortion(m1):
        if m1 not in cache:
            cache[m1] = mean_vq_distortion(n, f_order[:m1], e_q, sources, list_size)
            report.shrink_path.append((int(m1), cache[m1]))
        return cache[m1]

    # largest m1 with distortion(m1) <= e_q; distortion(0) == 0
    lo, hi = 0, len(f_order)
    if distortion(hi) <= e_q:
        lo = hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if distortion(mid) <= e_q:
            lo = mid
        else:
            hi = mid
    m1 = lo
    report.shrink_path.sort(key=lambda t: -t[0])
    report.m1 = m1
    report.m2 = len(f_order) - m1
    report.e_q_measured = distortion(m1)
    spec = NestedPolarSpec(n, tuple(f_order[:m1]), tuple(f_order[m1:]), list_size,
                           {"p_A": float(p_a), "p_c": float(p_c), "e_q": float(e_q),
                            "target_pb": float(target_pb), "p_c_method": report.p_c_method,
                            "reliability_order": [int(i) for i in f_order]})
    return spec, report


def _f_order(spec):
    order = spec.design.get("reliability_order")
    if order is None:
        raise ValueError("spec carries no reliability order for F")
    return np.asarray(order, dtype=np.int64)


def helper_quantile_padding(spec, quantile=0.9999, trials=100_000, seed=0, target=None):
    """Extra helper bits so the ``quantile`` device distortion meets the target.

    Indices move from ``F1`` to ``Fw`` starting at the most reliable end of
    ``F1``.  A device meets the target when its number of flipped bits is at
    most ``round(target * n)``.  Returns ``(extra_bits, measured_quantiles)`` where the second
    item lists the quantile distortion at each padding size tried.
    """
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    if trials * (1 - quantile) < 10:
        warnings.warn(f"{trials} trials resolve the {quantile} quantile poorly "
                      f"(fewer than 10 samples beyond it)", RuntimeWarning, stacklevel=2)
    e_q = spec.design["e_q"] if target is None else target
    # distortion is a whole number of flips; compare on that grid
    allowed = round(e_q * spec.n)
    order = _f_order(spec)
    sources = _random_sources(spec.n, trials, seed)
    measured = []
    for extra in range(spec.m1 + 1):
        d = vq_distortions(spec.n, order[:spec.m1 - extra], spec.design["e_q"], sources,
                           spec.list_size)
        qd = float(np.quantile(d, quantile, method="inverted_cdf"))
        measured.append(qd)
        if round(qd * spec.n) <= allowed:
            return extra, measured
    return spec.m1, measured


def pad_spec(spec, extra):
    """Spec with the ``extra`` most reliable indices of ``F1`` moved into ``Fw``."""
    order = _f_order(spec)
    m1 = spec.m1 - int(extra)
    if m1 < 0:
        raise ValueError("cannot move more indices than F1 holds")
    return NestedPolarSpec(spec.n, tuple(order[:m1]), tuple(order[m1:]), spec.list_size,
                           dict(spec.design))


def key_error_trials(spec, p_a, trials, seed, p_total=None):
    """Monte-Carlo key errors: uniform source, enrollment, BSC(p_a) reading.

    Returns ``(errors, trials, mean_distortion)``.
    """
    q = spec.design["e_q"]
    if p_total is None:
        p_total = rates.star(q, p_a)
    r = rng(seed, "trials", "key")
    errors = 0
    dist = 0.0
    for _ in range(trials):
        x = r.integers(0, 2, spec.n, dtype=np.uint8)
        enr = wz_enroll(spec, x, q)
        y = x ^ (r.random(spec.n) < p_a).astype(np.uint8)
        s_hat = wz_reconstruct(spec, y, enr.helper, p_total)
        errors += bool(np.any(s_hat != enr.secret))
        dist += enr.distortion
    return errors, trials, dist / trials
