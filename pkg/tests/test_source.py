import hashlib

import numpy as np
import pytest

from pufkey import source


def small_params(l=4, noise=0.0, cov=None):
    cov = np.eye(l) if cov is None else cov
    return source.SourceParams(1, l, np.zeros(l), cov, noise)


def test_identity_covariance_recovered():
    ds = source.generate_synthetic(small_params(), 10_000, 0, seed=1)
    st = source.estimate_statistics(ds, require_noise=False)
    assert np.abs(st.sample_autocovariance - np.eye(4)).max() < 0.05


def test_default_covariance_recovered():
    p = source.default_params(4, 4)
    ds = source.generate_synthetic(p, 10_000, 0, seed=2)
    st = source.estimate_statistics(ds, require_noise=False)
    assert np.abs(st.sample_autocovariance - p.autocovariance).max() < 0.05 * np.abs(p.autocovariance).max()


def test_zero_noise_measurements_equal_noiseless():
    ds = source.generate_synthetic(small_params(), 3, 3, seed=0)
    for d in ds.devices:
        for m in d.measurements:
            assert np.array_equal(m, d.noiseless)


def test_16x16_arrays_have_length_256():
    ds = source.generate_synthetic(source.default_params(), 2, 1, seed=0)
    assert ds.devices[0].noiseless.shape == (256,)


def test_generation_is_reproducible_and_per_device():
    p = source.default_params(4, 4)
    a = source.generate_synthetic(p, 5, 2, seed=7)
    b = source.generate_synthetic(p, 5, 2, seed=7)
    c = source.generate_synthetic(p, 3, 2, seed=7)
    for da, db in zip(a.devices, b.devices):
        assert np.array_equal(da.noiseless, db.noiseless)
        assert all(np.array_equal(x, y) for x, y in zip(da.measurements, db.measurements))
    # device i depends only on (seed, i)
    assert np.array_equal(a.devices[2].noiseless, c.devices[2].noiseless)
    d = source.generate_synthetic(p, 5, 2, seed=8)
    assert not np.array_equal(a.devices[0].noiseless, d.devices[0].noiseless)


def test_non_psd_rejected():
    cov = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(source.RejectedInput):
        source.generate_synthetic(source.SourceParams(1, 2, np.zeros(2), cov, 0.0), 1, 0, 0)


def test_dimension_mismatch_rejected():
    with pytest.raises(source.RejectedInput):
        source.SourceParams(2, 2, np.zeros(4), np.eye(3), 0.0)
    with pytest.raises(source.RejectedInput):
        source.measure(np.zeros(3), small_params(), 0)
    with pytest.raises(source.RejectedInput):
        small_params(noise=-1.0)


def test_noise_variance_estimate_within_ten_percent():
    p = source.SourceParams(4, 4, np.zeros(16), source.grid_covariance(4, 4), 4.0)
    ds = source.generate_synthetic(p, 50, 20, seed=3)
    est = source.estimate_statistics(ds).estimated_noise_variance
    assert abs(est - 4.0) < 0.4


def test_constant_array_has_zero_covariance():
    dev = [source.Device(np.full(4, 3.0), []) for _ in range(3)]
    ds = source.RODataset(small_params(), dev)
    st = source.estimate_statistics(ds, require_noise=False)
    assert np.all(st.sample_autocovariance == 0)


def test_known_2x2_covariance_within_three_standard_errors():
    cov = np.array([[2.0, 0.8], [0.8, 1.0]])
    m = 4000
    ds = source.generate_synthetic(source.SourceParams(1, 2, np.zeros(2), cov, 0.0), m, 0, seed=4)
    est = source.estimate_statistics(ds, require_noise=False).sample_autocovariance
    # var of a sample covariance entry: (C_ab^2 + C_aa C_bb) / (m - 1)
    se = np.sqrt((cov**2 + np.outer(np.diag(cov), np.diag(cov))) / (m - 1))
    assert np.all(np.abs(est - cov) < 3 * se)


def test_estimation_errors_name_the_deficiency():
    ds = source.generate_synthetic(small_params(), 1, 3, seed=0)
    with pytest.raises(source.EstimationError, match="devices"):
        source.estimate_statistics(ds)
    ds = source.generate_synthetic(small_params(), 3, 1, seed=0)
    with pytest.raises(source.EstimationError, match="measurements"):
        source.estimate_statistics(ds)


def test_measure_noise_and_determinism():
    p = source.SourceParams(1, 1, np.zeros(1), np.eye(1), 1.0)
    g = np.random.default_rng(5)
    draws = np.array([source.measure(np.zeros(1), p, g)[0] for _ in range(100_000)])
    assert abs(draws.var() - 1.0) < 0.05
    x = np.arange(4.0)
    assert np.array_equal(source.measure(x, small_params(), 1), x)
    pn = small_params(noise=1.0)
    assert np.array_equal(source.measure(x, pn, 3), source.measure(x, pn, 3))
    assert not np.array_equal(source.measure(x, pn, 3), source.measure(x, pn, 4))


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_csv_roundtrip_bitwise(tmp_path):
    p = source.default_params(2, 2, noise_variance=0.5)
    ds = source.generate_synthetic(p, 3, 2, seed=9)
    path = source.write_csv(ds, tmp_path / "d.csv")
    back = source.ingest_csv(path)
    assert (back.params.rows, back.params.cols) == (2, 2)
    for a, b in zip(ds.devices, back.devices):
        assert np.array_equal(a.noiseless, b.noiseless)
        assert all(np.array_equal(x, y) for x, y in zip(a.measurements, b.measurements))
    # rewriting the ingested data reproduces the file exactly
    source.write_csv(back, tmp_path / "e.csv", sidecar=False)
    assert _sha(tmp_path / "d.csv") == _sha(tmp_path / "e.csv")


def test_ingest_fixture_counts(tmp_path):
    lines = ["device_id,measurement_id,ro_index,frequency_hz"]
    g = np.random.default_rng(0)
    for dev in range(2):
        for meas in range(3):
            for ro in range(4):
                lines.append(f"{dev},{meas},{ro},{g.normal()}")
    f = tmp_path / "f.csv"
    f.write_text("\n".join(lines) + "\n")
    ds = source.ingest_csv(f)
    assert len(ds.devices) == 2
    assert all(len(d.measurements) == 2 for d in ds.devices)
    assert ds.params.size == 4


def test_ingest_gap_names_missing_index(tmp_path):
    f = tmp_path / "g.csv"
    f.write_text("device_id,measurement_id,ro_index,frequency_hz\n"
                 "0,0,0,1.0\n0,0,2,1.0\n0,0,3,1.0\n")
    with pytest.raises(source.CSVParseError, match="missing ro_index 1"):
        source.ingest_csv(f)


def test_ingest_duplicate_and_bad_rows_report_line(tmp_path):
    f = tmp_path / "h.csv"
    f.write_text("device_id,measurement_id,ro_index,frequency_hz\n0,0,0,1.0\n0,0,0,2.0\n")
    with pytest.raises(source.CSVParseError, match="line 3"):
        source.ingest_csv(f)
    f.write_text("device_id,measurement_id,ro_index,frequency_hz\n0,0,0,abc\n")
    with pytest.raises(source.CSVParseError, match="line 2"):
        source.ingest_csv(f)
    f.write_text("wrong,header\n")
    with pytest.raises(source.CSVParseError, match="line 1"):
        source.ingest_csv(f)
