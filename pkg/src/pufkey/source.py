"""Correlated ring-oscillator array outputs with additive Gaussian measurement noise."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import rng


class RejectedInput(ValueError):
    """Parameters that cannot describe a source (shape, PSD, sign)."""


class CSVParseError(ValueError):
    """Malformed RO measurement file."""


class EstimationError(ValueError):
    """Too few devices or measurements for the requested statistic."""


CSV_HEADER = ["device_id", "measurement_id", "ro_index", "frequency_hz"]


@dataclass(frozen=True)
class SourceParams:
    rows: int
    cols: int
    mean_vector: np.ndarray
    autocovariance: np.ndarray
    noise_variance: float

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise RejectedInput("rows and cols must be positive")
        l = self.rows * self.cols
        mean = np.broadcast_to(np.asarray(self.mean_vector, dtype=float), (l,)).copy()
        cov = np.asarray(self.autocovariance, dtype=float)
        if cov.shape != (l, l):
            raise RejectedInput(f"autocovariance must be {l}x{l}, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise RejectedInput("autocovariance is not symmetric")
        if self.noise_variance < 0:
            raise RejectedInput("noise_variance must be >= 0")
        object.__setattr__(self, "mean_vector", mean)
        object.__setattr__(self, "autocovariance", cov)
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def size(self):
        return self.rows * self.cols


def grid_covariance(rows, cols, variance=1.0, rho=0.7):
    """``variance * rho**d`` with ``d`` the Euclidean distance on the RO grid."""
    r, c = np.divmod(np.arange(rows * cols), cols)
    d = np.hypot(r[:, None] - r[None, :], c[:, None] - c[None, :])
    return variance * rho ** d


def default_params(rows=16, cols=16, variance=1.0, rho=0.7, noise_variance=3e-4,
                   mean=0.0):
    return SourceParams(rows, cols, np.full(rows * cols, mean),
                        grid_covariance(rows, cols, variance, rho), noise_variance)


def covariance_factor(cov):
    """Symmetric square root ``F`` with ``F F^T = cov``.

    Eigenvalues down to ``-1e-10 * trace`` are clamped to zero; anything more
    negative means the matrix is not PSD.
    """
    w, v = np.linalg.eigh(cov)
    tol = 1e-10 * max(np.trace(cov), np.finfo(float).tiny)
    if w.min() < -tol:
        raise RejectedInput(f"autocovariance is not PSD (min eigenvalue {w.min():.3g})")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass
class Device:
    noiseless: np.ndarray
    measurements: list = field(default_factory=list)


@dataclass
class RODataset:
    params: SourceParams
    devices: list

    @property
    def noiseless(self):
        return np.vstack([d.noiseless for d in self.devices])


def measure(x, params, seed):
    """One noisy read-out ``x + z`` with ``z ~ N(0, noise_variance I)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.size,):
        raise RejectedInput(f"array length {x.shape} != {params.size}")
    g = seed if isinstance(seed, np.random.Generator) else rng(seed, "measure")
    if params.noise_variance == 0:
        return x.copy()
    return x + g.normal(0.0, np.sqrt(params.noise_variance), params.size)


def generate_synthetic(params, n_devices, n_measurements, seed):
    """Draw devices i.i.d. from ``N(mean, C)`` plus repeated noisy measurements.

    Device ``i`` uses its own stream ``derive(seed, "source", i)``, so any
    subset of devices can be regenerated independently.
    """
    if n_devices < 1:
        raise RejectedInput("n_devices must be >= 1")
    if n_measurements < 0:
        raise RejectedInput("n_measurements must be >= 0")
    F = covariance_factor(params.autocovariance)
    sd = np.sqrt(params.noise_variance)
    devices = []
    for i in range(n_devices):
        g = rng(seed, "source", i)
        x = params.mean_vector + F @ g.standard_normal(params.size)
        meas = []
        for _ in range(n_measurements):
            if sd == 0:
                meas.append(x.copy())
            else:
                meas.append(x + sd * g.standard_normal(params.size))
        devices.append(Device(x, meas))
    return RODataset(params, devices)


@dataclass(frozen=True)
class SourceStats:
    sample_mean: np.ndarray
    sample_autocovariance: np.ndarray
    estimated_noise_variance: float


def estimate_statistics(dataset, require_noise=True):
    """Unbiased mean/covariance across devices and pooled noise variance.

    The noise variance pools the unbiased per-device, per-RO variances of the
    repeated noisy measurements and averages them over ROs.
    """
    X = dataset.noiseless
    if X.shape[0] < 2:
        raise EstimationError(f"need >= 2 devices for covariance, have {X.shape[0]}")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1)
    cov = 0.5 * (cov + cov.T)
    ss = 0.0
    dof = 0
    for d in dataset.devices:
        if len(d.measurements) >= 2:
            Y = np.vstack(d.measurements)
            ss += ((Y - Y.mean(axis=0)) ** 2).sum()
            dof += (Y.shape[0] - 1) * Y.shape[1]
    if dof == 0:
        if require_noise:
            raise EstimationError(
                "need >= 2 noisy measurements on at least one device for noise variance")
        noise = 0.0
    else:
        noise = ss / dof
    return SourceStats(mean, cov, float(noise))


def write_csv(dataset, path, sidecar=True):
    """Write the CSV schema (measurement 0 is the noiseless array)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for dev_id, d in enumerate(dataset.devices):
            for meas_id, arr in enumerate([d.noiseless, *d.measurements]):
                for ro, v in enumerate(arr):
                    w.writerow([dev_id, meas_id, ro, repr(float(v))])
    if sidecar:
        p = dataset.params
        side = {"r": p.rows, "c": p.cols, "noise_variance": p.noise_variance}
        path.with_suffix(".json").write_text(json.dumps(side, indent=2))
    return path


def ingest_csv(path, rows=None, cols=None):
    """Read a measurement CSV back into an :class:`RODataset`.

    Array shape comes from ``rows``/``cols`` or the JSON sidecar; without
    either the array is taken as a single row.  Source parameters are filled
    from :func:`estimate_statistics` (noise variance from the sidecar when no
    repeated measurements exist).
    """
    path = Path(path)
    side = {}
    if path.with_suffix(".json").exists():
        side = json.loads(path.with_suffix(".json").read_text())
    cells = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise CSVParseError(f"line 1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise CSVParseError(f"line {lineno}: expected 4 fields, got {len(row)}")
            try:
                dev, meas, ro = (int(v) for v in row[:3])
                val = float(row[3])
            except ValueError as exc:
                raise CSVParseError(f"line {lineno}: {exc}") from None
            if min(dev, meas, ro) < 0:
                raise CSVParseError(f"line {lineno}: negative id")
            key = (dev, meas, ro)
            if key in cells:
                raise CSVParseError(
                    f"line {lineno}: duplicate (device_id, measurement_id, ro_index) {key}")
            cells[key] = val
    if not cells:
        raise CSVParseError("no data rows")
    by_array = {}
    for (dev, meas, ro), v in cells.items():
        by_array.setdefault((dev, meas), {})[ro] = v
    l = max(max(a) for a in by_array.values()) + 1
    for (dev, meas), arr in sorted(by_array.items()):
        missing = sorted(set(range(l)) - set(arr))
        if missing:
            raise CSVParseError(
                f"device {dev} measurement {meas}: missing ro_index {missing[0]}")
    devices_ids = sorted({d for d, _ in by_array})
    devices = []
    for dev in devices_ids:
        metas = sorted(m for d, m in by_array if d == dev)
        if metas != list(range(len(metas))):
            raise CSVParseError(f"device {dev}: measurement ids not contiguous from 0")
        arrays = [np.array([by_array[(dev, m)][i] for i in range(l)]) for m in metas]
        devices.append(Device(arrays[0], arrays[1:]))
    rows = rows or side.get("r")
    cols = cols or side.get("c")
    if rows is None or cols is None:
        rows, cols = 1, l
    if rows * cols != l:
        raise CSVParseError(f"r*c = {rows * cols} does not match {l} ROs per array")
    ds = RODataset(SourceParams(rows, cols, np.zeros(l), np.zeros((l, l)), 0.0), devices)
    has_repeats = any(len(d.measurements) >= 2 for d in devices)
    if len(devices) >= 2:
        st = estimate_statistics(ds, require_noise=False)
        noise = st.estimated_noise_variance if has_repeats else float(side.get("noise_variance", 0.0))
        ds.params = SourceParams(rows, cols, st.sample_mean, st.sample_autocovariance, noise)
    else:
        ds.params = SourceParams(rows, cols, devices[0].noiseless.copy(), np.zeros((l, l)),
                                 float(side.get("noise_variance", 0.0)))
    return ds
