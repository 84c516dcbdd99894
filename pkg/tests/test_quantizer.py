import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from pufkey import quantizer as qz


def sign_agreement(sigma):
    """Closed form for K=1: P[sign(t) == sign(t + z)] with correlation 1/sqrt(1+s^2)."""
    return 1.0 - np.arccos(1.0 / np.sqrt(1.0 + sigma**2)) / np.pi


def test_fit_gaussian_degenerate_and_concentration():
    with pytest.raises(qz.FitError):
        qz.fit_gaussian([5.0] * 10)
    with pytest.raises(qz.FitError):
        qz.fit_gaussian([1.0, 2.0])
    x = np.random.default_rng(0).normal(2.0, 3.0, 100_000)
    f = qz.fit_gaussian(x)
    assert abs(f.mean - 2.0) < 0.05
    assert abs(f.std / 3.0 - 1.0) < 0.02


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 200), st.integers(0, 2**32 - 1))
def test_aicc_exceeds_aic(m, seed):
    f = qz.fit_gaussian(np.random.default_rng(seed).normal(size=m))
    assert f.aicc > f.aic
    assert np.isclose(f.bic - f.aic, 2 * np.log(m) - 4)


def test_equalize_examples():
    assert qz.equalize(3.0, 3.0, 2.0) == 0.0
    assert qz.equalize(5.0, 3.0, 2.0) == 1.0
    assert qz.equalize(7.0, 3.0, 2.0) == 2.0
    with pytest.raises(ValueError):
        qz.equalize(1.0, 0.0, 0.0)


def test_boundaries():
    b1 = qz.boundaries(1)
    assert b1[0] == -np.inf and b1[1] == 0.0 and b1[2] == np.inf
    assert np.allclose(qz.boundaries(2)[1:-1], [-0.6744897501960817, 0.0, 0.6744897501960817],
                       atol=1e-12)
    for K in range(1, 9):
        b = qz.boundaries(K)
        assert np.all(np.diff(b) > 0)
        assert np.array_equal(b, -b[::-1])
    for bad in (0, 9, 1.5):
        with pytest.raises(ValueError):
            qz.boundaries(bad)


def test_quantize_examples_and_ties():
    assert qz.quantize(-1.0, 1) == (1, pytest.approx([0]))
    k, bits = qz.quantize(-1.0, 1)
    assert k == 1 and list(bits) == [0]
    codes = [list(qz.quantize(t, 2)[1]) for t in (-1.0, -0.3, 0.3, 1.0)]
    assert codes == [[0, 0], [0, 1], [1, 1], [1, 0]]
    # value on a boundary falls to the lower interval
    assert qz.quantize(0.0, 1)[0] == 1
    assert qz.quantize(qz.boundaries(2)[1], 2)[0] == 1


@pytest.mark.parametrize("K", [1, 2, 3, 4])
def test_gray_neighbours_differ_in_one_bit(K):
    table = np.vstack([qz.gray_code(i, K) for i in range(2**K)])
    assert len({tuple(r) for r in table}) == 2**K
    assert np.all((table[1:] != table[:-1]).sum(axis=1) == 1)


def test_correctness_probability_closed_form_k1():
    for s in (0.001, 0.01, 0.1, 0.5, 1.0, 3.0):
        assert abs(qz.correctness_probability(1, s) - sign_agreement(s)) < 1e-12


def test_correctness_probability_monte_carlo_k1():
    g = np.random.default_rng(11)
    n = 10_000_000
    hits = 0
    for _ in range(10):
        t = g.standard_normal(n // 10)
        z = g.normal(0.0, 0.1, n // 10)
        hits += np.count_nonzero((t > 0) == (t + z > 0))
    p_mc = hits / n
    p = qz.correctness_probability(1, 0.1)
    assert abs(p_mc - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_correctness_probability_monte_carlo_k3():
    g = np.random.default_rng(12)
    n = 2_000_000
    t = g.standard_normal(n)
    z = g.normal(0.0, 0.05, n)
    same = qz.interval(t, 3) == qz.interval(t + z, 3)
    p = qz.correctness_probability(3, 0.05)
    assert abs(same.mean() - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_correctness_probability_zero_noise_and_order():
    for K in range(1, 9):
        assert qz.correctness_probability(K, 0.0) == 1.0
    p = [qz.correctness_probability(K, 0.05) for K in (1, 2, 3)]
    assert p[2] < p[1] < p[0]


def test_correctness_probability_monotone_grid():
    sig = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5]
    P = np.array([[qz.correctness_probability(K, s) for s in sig] for K in range(1, 5)])
    assert np.all(np.diff(P, axis=0) < 0)
    assert np.all(np.diff(P, axis=1) < 0)
    assert np.all((P > 0) & (P <= 1))


def test_threshold_consistency_and_minimality():
    for c in (16, 18, 20):
        P = qz.correctness_threshold(256, c)
        assert binom.sf(c, 256, 1 - P) <= 1e-9 * (1 + 1e-9)
        assert binom.sf(c, 256, 1 - (P - 1e-4)) > 1e-9


def test_threshold_last_term_case():
    P = qz.correctness_threshold(10, 9)
    assert (1 - P) ** 10 <= 1e-9 * (1 + 1e-9)
    with pytest.raises(qz.DesignError):
        qz.correctness_threshold(10, 10)


def test_log_binomial_tail_matches_scipy():
    for l, c, p in ((256, 16, 0.01), (255, 18, 0.0097), (50, 3, 0.2)):
        assert np.isclose(qz.log_binomial_tail(l, c, p), binom.logsf(c, l, p), rtol=1e-10)


def test_required_correction_examples():
    assert qz.required_correction([0] + [1] * 255, 20) == 20
    assert qz.required_correction([0, 3, 2, 3, 1], 2) == 6


def _models(noise_std):
    return [qz.CoefficientModel(0.0, 1.0, s) for s in noise_std]


def test_allocate_all_zero_when_noise_dominates():
    d = qz.allocate_bits(_models([1.0] * 64), 4)
    assert d.n == 0 and d.e == 0 and d.bits[0] == 0


def test_allocate_is_monotone_in_c_max():
    noise = np.geomspace(0.001, 0.3, 64)
    prev = None
    for c in range(2, 10):
        d = qz.allocate_bits(_models(noise), c)
        assert d.bits[0] == 0
        assert d.d_min_required == 2 * d.e + 1
        if prev is not None:
            assert d.threshold <= prev.threshold
            assert all(a >= b for a, b in zip(d.bits, prev.bits))
        prev = d


def test_allocation_rule_is_maximal():
    noise = np.geomspace(0.001, 0.3, 32)
    d = qz.allocate_bits(_models(noise), 3)
    for K, s in zip(d.bits[1:], noise[1:]):
        if K:
            assert qz.correctness_probability(K, s) >= d.threshold
        if K < qz.K_MAX:
            assert qz.correctness_probability(K + 1, s) < d.threshold


def test_design_json_and_hash_stable():
    d = qz.allocate_bits(_models(np.geomspace(0.001, 0.3, 16)), 2)
    j = d.to_json()
    assert set(j) == {"c_max", "threshold", "bits_per_coeff", "n", "e", "dc_excluded"}
    back = qz.QuantizerDesign.from_json(j)
    assert back.content_hash() == d.content_hash()
    assert qz.fixed_design(16, 1).content_hash() != d.content_hash()


def test_extract_bits_examples():
    d = qz.fixed_design(2, 1)
    models = [qz.CoefficientModel(0.0, 1.0, 0.0)] * 2
    assert list(qz.extract_bits(d, models, [5.0, -0.3])) == [0]
    none = qz.QuantizerDesign(0, 0.5, 1e-9, (0, 0), 0, 0)
    assert qz.extract_bits(none, models, [1.0, 2.0]).size == 0
    with pytest.raises(ValueError):
        qz.extract_bits(d, models, [1.0, 2.0, 3.0])


def test_extracted_bits_are_balanced_and_repeatable():
    bits = (0, 1, 2, 3)
    d = qz.QuantizerDesign(1, 0.9, 1e-9, bits, 6, 3)
    models = [qz.CoefficientModel(1.0, 2.0, 0.0)] * 4
    c = np.random.default_rng(2).normal(1.0, 2.0, (100_000, 4))
    x = qz.extract_bits(d, models, c)
    assert x.shape == (100_000, 6)
    assert np.abs(x.mean(axis=0) - 0.5).max() <= 0.01
    assert np.array_equal(x, qz.extract_bits(d, models, c))
