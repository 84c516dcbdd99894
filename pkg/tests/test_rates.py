import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from pufkey import rates

GRID = np.linspace(0.0, 0.5, 101)


def kl_nats(a, b):
    return a * np.log(a / b) + (1 - a) * np.log((1 - a) / (1 - b))


def esp_closed_form(rate_nats, p):
    """Sphere-packing exponent of the BSC as a divergence: h(delta) = ln2 - R."""
    h = lambda d: -d * np.log(d) - (1 - d) * np.log(1 - d)
    delta = brentq(lambda d: h(d) - (np.log(2) - rate_nats), p, 0.5)
    return kl_nats(delta, p)


def test_binary_entropy():
    assert rates.binary_entropy(0.5) == 1.0
    assert rates.binary_entropy(0.0) == 0.0 and rates.binary_entropy(1.0) == 0.0
    assert abs(rates.binary_entropy(0.11) - 0.49992) < 1e-4
    with pytest.raises(ValueError):
        rates.binary_entropy(1.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_star_properties(q, p):
    assert abs(rates.star(q, p) - rates.star(p, q)) < 1e-15
    assert abs(rates.star(0.0, p) - p) < 1e-15
    assert abs(rates.star(0.5, p) - 0.5) < 1e-15


def test_star_example():
    assert abs(rates.star(0.0456, 0.15) - 0.1819) < 1e-4


def test_fcs_point():
    assert rates.fcs_region_point(0.0) == (1.0, 0.0)
    assert rates.fcs_region_point(0.5) == (0.0, 1.0)
    s, l = rates.fcs_region_point(0.0097)
    assert abs(s - 0.922) < 1e-3 and abs(l - 0.079) < 1e-3


def test_gs_boundary():
    b = rates.gs_region_boundary(0.15, GRID)
    assert abs(b.key[0] - 0.390) < 1e-3 and abs(b.storage[0] - 0.610) < 1e-3
    assert abs(b.key[-1]) < 1e-12 and abs(b.leakage[-1]) < 1e-12
    assert np.all(b.leakage >= 0)
    assert np.all((b.key >= 0) & (b.key <= 1))
    # R_s + R_w = 1 - h(q), equal to 1 only at q = 0
    total = b.key + b.storage
    assert np.allclose(total, 1 - rates.binary_entropy(GRID), atol=1e-12)
    assert abs(total[0] - 1) < 1e-12 and np.all(total[1:] < 1)
    assert len(b.tuples()) == GRID.size and len(b.rows()[0]) == 4
    # FCS optimum lies on the GS boundary at q = 0
    s, l = rates.fcs_region_point(0.15)
    assert abs(s - b.key[0]) < 1e-12 and abs(l - b.leakage[0]) < 1e-12


def test_gs_boundary_continuity():
    b = rates.gs_region_boundary(0.15, np.linspace(0, 0.5, 2001))
    for arr in (b.key, b.leakage):
        assert np.abs(np.diff(arr)).max() < 0.01


def test_cs_boundary():
    cs = rates.cs_region_boundary(0.15, GRID)
    gs = rates.gs_region_boundary(0.15, GRID)
    assert cs.storage[0] == 1.0
    assert np.all(cs.storage >= gs.storage - 1e-12)
    i = int(np.argmin(np.abs(GRID - 0.1)))
    assert abs(cs.key[i] - (1 - rates.binary_entropy(0.22))) < 1e-12
    assert abs(cs.key[i] - 0.240) < 1e-3 and abs(cs.storage[i] - 0.531) < 1e-3
    with pytest.raises(ValueError):
        rates.cs_region_boundary(0.15, [0.6])


def test_code_points():
    s, l = rates.code_point_fcs(255, 131)
    assert abs(s - 0.514) < 1e-3 and abs(l - 0.486) < 1e-3
    assert rates.code_point_fcs(7, 7) == (1.0, 0.0)
    assert rates.code_point_fcs(1024, 128) == (0.125, 0.875)
    t = rates.code_point_wz(1024, 128, 650)
    assert t.key == 0.125 and t.storage == t.leakage == 650 / 1024


@pytest.mark.parametrize("rate_bits", [0.1, 0.2, 0.3, 0.35])
def test_sphere_packing_exponent_matches_divergence(rate_bits):
    r = rate_bits * np.log(2)
    assert abs(rates.sphere_packing_exponent(r, 0.15) - esp_closed_form(r, 0.15)) < 1e-7


def test_sphere_packing_ratio_values_and_monotone():
    r1, ratio1 = rates.sphere_packing_ratio(1024, 0.15, 1e-6)
    r2, ratio2 = rates.sphere_packing_ratio(2048, 0.15, 1e-6)
    assert abs(ratio1 - 0.375) <= 0.01 and abs(ratio2 - 0.437) <= 0.01
    assert r1 < r2
    prev = 0
    for n in (128, 256, 512, 1024, 4096, 16384):
        r = rates.sphere_packing_rate(n, 0.15, 1e-6)
        assert r >= prev
        prev = r
    cap = 1 - rates.binary_entropy(0.15)
    assert cap - rates.sphere_packing_rate(2**20, 0.15, 1e-6) < 0.01


def test_sphere_packing_errors():
    with pytest.raises(ValueError):
        rates.sphere_packing_rate(32, 0.15, 1e-6)
    # a 128-bit key does not fit into 512 bits at this target
    assert rates.sphere_packing_rate(512, 0.15, 1e-6) < 0.25


def test_normal_approximation():
    assert abs(rates.finite_length_normal_approx(255, 0.0097, 1e-9) - 0.691) < 0.01
    assert rates.finite_length_normal_approx(255, 1e-12, 1e-9) > 0.95
    vals = [rates.finite_length_normal_approx(n, 0.05, 1e-6) for n in (128, 256, 1024, 8192)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
