import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pufkey import source, transform
from pufkey.transform import Kind

SIZES = [(1, 1), (2, 4), (4, 4), (8, 8), (16, 16), (32, 32), (8, 32)]


def plan_for(kind, r, c, seed=0):
    if kind is Kind.KLT:
        cov = source.grid_covariance(r, c, 1.0, 0.6)
        return transform.make_plan(kind, r, c, cov)
    return transform.make_plan(kind, r, c)


@pytest.mark.parametrize("kind", list(Kind))
@pytest.mark.parametrize("r,c", SIZES)
def test_round_trip_and_parseval(kind, r, c):
    if kind is Kind.KLT and r * c > 256:
        pytest.skip("KLT eigendecomposition kept small here; acceptance covers 32x32")
    plan = plan_for(kind, r, c)
    x = np.random.default_rng(r * 100 + c).normal(size=(3, r * c))
    t = transform.forward(plan, x)
    assert np.allclose(transform.inverse(plan, t), x, atol=1e-9, rtol=0)
    assert np.allclose((t**2).sum(axis=1), (x**2).sum(axis=1), atol=1e-9, rtol=0)


@pytest.mark.parametrize("kind", [Kind.DCT, Kind.DWHT, Kind.DHT])
def test_matrix_matches_forward(kind):
    plan = transform.make_plan(kind, 4, 8)
    x = np.random.default_rng(1).normal(size=32)
    assert np.allclose(plan.matrix() @ x, transform.forward(plan, x), atol=1e-12)


def test_constant_array_has_only_dc():
    for kind in (Kind.DCT, Kind.DWHT, Kind.DHT):
        plan = transform.make_plan(kind, 8, 8)
        t = transform.forward(plan, np.ones(64))
        assert abs(t[0] - 8.0) < 1e-12
        assert np.abs(t[1:]).max() < 1e-12


def test_power_of_two_required_for_dwht_and_dht():
    transform.make_plan(Kind.DCT, 3, 5)
    for kind in (Kind.DWHT, Kind.DHT):
        with pytest.raises(transform.TransformError):
            transform.make_plan(kind, 3, 4)


def test_klt_needs_basis_and_orthogonality():
    with pytest.raises(transform.TransformError):
        transform.TransformPlan(Kind.KLT, 2, 2)
    with pytest.raises(transform.TransformError):
        transform.TransformPlan(Kind.KLT, 2, 2, np.ones((4, 4)))


def test_klt_is_exactly_decorrelating():
    cov = source.grid_covariance(16, 16)
    plan = transform.make_plan(Kind.KLT, 16, 16, cov)
    eta = transform.decorrelation_efficiency(transform.coefficient_covariance(plan, cov), cov)
    assert abs(eta - 1.0) < 1e-6


def test_klt_sorting_and_sign_rule():
    cov = np.array([[2.0, 1.0], [1.0, 2.0]])
    B = transform.fit_klt(cov)
    w = np.diag(B.T @ cov @ B)
    assert w[0] >= w[1]
    for j in range(2):
        col = B[:, j]
        assert col[np.argmax(np.abs(col).round(12))] > 0


def test_klt_sample_covariance_diagonal():
    cov = source.grid_covariance(4, 4)
    plan = transform.make_plan(Kind.KLT, 4, 4, cov)
    ds = source.generate_synthetic(source.default_params(4, 4), 20_000, 0, seed=1)
    c = np.cov(transform.forward(plan, ds.noiseless), rowvar=False)
    off = c - np.diag(np.diag(c))
    # sampling error of a covariance entry is about sqrt(var_a var_b / m)
    d = np.diag(c)
    assert np.all(np.abs(off) < 5 * np.sqrt(np.outer(d, d) / 20_000))


def test_efficiency_examples():
    cx = np.array([[1.0, 5.0], [5.0, 1.0]])
    assert transform.decorrelation_efficiency(np.diag([3.0, 4.0]), cx) == 1.0
    assert transform.decorrelation_efficiency(cx, cx) == 0.0
    ct = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert abs(transform.decorrelation_efficiency(ct, cx) - 0.9) < 1e-15
    with pytest.raises(transform.UndefinedMetric):
        transform.decorrelation_efficiency(np.eye(2), np.eye(2))


def test_klt_beats_fixed_transforms_on_default_source():
    cov = source.grid_covariance(8, 8)
    etas = {}
    for kind in Kind:
        plan = plan_for(kind, 8, 8) if kind is not Kind.KLT else transform.make_plan(kind, 8, 8, cov)
        etas[kind] = transform.decorrelation_efficiency(transform.coefficient_covariance(plan, cov), cov)
    assert all(etas[Kind.KLT] >= v - 1e-12 for v in etas.values())


def test_coefficient_label_row_major():
    plan = transform.make_plan(Kind.DCT, 16, 16)
    assert transform.coefficient_label(plan, 0) == 1
    assert transform.coefficient_label(plan, 16) == 17
    assert transform.coefficient_label(plan, 32) == 33


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([Kind.DCT, Kind.DWHT, Kind.DHT]),
       st.sampled_from([1, 2, 4, 8]), st.sampled_from([1, 2, 4, 8]),
       st.integers(0, 2**32 - 1))
def test_linearity_and_orthogonality_property(kind, r, c, seed):
    plan = transform.make_plan(kind, r, c)
    g = np.random.default_rng(seed)
    x, y = g.normal(size=(2, r * c))
    a = g.normal()
    fx, fy = transform.forward(plan, x), transform.forward(plan, y)
    assert np.allclose(transform.forward(plan, a * x + y), a * fx + fy, atol=1e-10)
    assert abs(fx @ fy - x @ y) < 1e-9
