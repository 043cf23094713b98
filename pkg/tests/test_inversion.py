import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad, trapezoid

from spsstats.analytics import WindowSpec, mean_finite, var_finite
from spsstats.inversion import (
    InversionConfig,
    InversionError,
    convolve_oracle,
    counting_distribution,
    counting_prob_transform,
    invert,
    k_n,
    k_n_oracle,
    k_n_transform,
    moments_by_inversion,
)
from spsstats.model import (
    DetectorParams,
    DomainError,
    IdealCycle,
    Lossy,
    LossyDeadtime,
    RateParams,
    laplace_cycle,
    pdf_cycle,
    pdf_lossy,
    pgf_laplace,
)

UNIT = IdealCycle(RateParams(1.0, 1.0))


def two_fold_density(t, a, b):
    """Closed-form convolution of two hypoexponential(a, b) densities, a != b."""
    c = a * b / (a - b)
    ea, eb = np.exp(-a * t), np.exp(-b * t)
    # f * f = c^2 [ t e^{-bt} + t e^{-at} - 2 (e^{-bt} - e^{-at})/(a - b) ]
    return c * c * (t * eb + t * ea - 2.0 * (eb - ea) / (a - b))


# inverter

@pytest.mark.parametrize("method", ["euler", "talbot"])
@pytest.mark.parametrize("t", [0.1, 1.0, 37.0])
def test_unit_step(method, t):
    assert invert(lambda s: 1.0 / s, t, InversionConfig(method)) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("method", ["euler", "talbot"])
def test_invert_cycle_density(method):
    p = RateParams(2.0, 1.0)
    got = invert(lambda s: laplace_cycle(s, p), 1.0, InversionConfig(method))
    assert got == pytest.approx(2 * (math.exp(-1) - math.exp(-2)), abs=1e-9)


def test_invert_lossy_density_matches_closed_form():
    kind = Lossy(RateParams(1.0, 1.0), 0.5)
    assert invert(kind.laplace, 1.0) == pytest.approx(float(pdf_lossy(1.0, kind.rates, 0.5)), abs=1e-10)


def test_zero_count_probability():
    val = invert(lambda s: counting_prob_transform(0, s, UNIT), 1.0)
    assert val == pytest.approx(2 / math.e, abs=1e-10)


def test_invert_rejects_bad_time():
    with pytest.raises(ValueError):
        invert(lambda s: 1 / s, 0.0)


# transforms of counting quantities

def test_k_n_transform_single_interval():
    s = np.array([0.5, 2.0])
    np.testing.assert_allclose(k_n_transform(1, s, UNIT), laplace_cycle(s, UNIT.rates) / s)


def test_counting_prob_transform_examples():
    s = np.array([0.3, 1.0, 4.0])
    np.testing.assert_allclose(counting_prob_transform(0, s, UNIT),
                               pgf_laplace(s, 0.0, laplace_cycle(s, UNIT.rates)))
    assert counting_prob_transform(1, 1.0, UNIT) == pytest.approx(3 / 16)
    # coefficients telescope to 1/s
    total = counting_prob_transform(np.arange(400), np.array([0.2]), UNIT).sum(axis=0)
    assert total[0] == pytest.approx(1 / 0.2, rel=1e-12)
    with pytest.raises(DomainError):
        counting_prob_transform(1, 0.0, UNIT)
    with pytest.raises(ValueError):
        k_n_transform(0, 1.0, UNIT)


def test_pgf_identity():
    # inverting the generating-function transform reproduces sum P_T(n) xi^n
    kind = Lossy(RateParams(1.5, 0.8), 0.6)
    w = WindowSpec(4.0)
    dist = counting_distribution(kind, w, 60)
    g = invert(lambda s: pgf_laplace(s, 0.5, kind.laplace(s)), w.duration)
    assert dist.pgf(0.5) == pytest.approx(g, abs=1e-9)


def test_k2_matches_analytic_two_fold_convolution():
    got = k_n(UNIT, 2, 10.0)
    # equal rates: f_2 is the Gamma(4, 1) density
    ref = quad(lambda t: t**3 * math.exp(-t) / 6, 0, 10.0)[0]
    assert got == pytest.approx(ref, abs=1e-7)


# oracle

def test_convolve_oracle_single_fold_is_pdf():
    kind = IdealCycle(RateParams(2.0, 0.5))
    t, f1 = convolve_oracle(kind, 1, 0.01, 5.0)
    np.testing.assert_allclose(f1, pdf_cycle(t, kind.rates))


def test_convolve_oracle_two_fold_distinct_rates():
    a, b = 2.0, 0.5
    kind = IdealCycle(RateParams(a, b))
    t, f2 = convolve_oracle(kind, 2, 0.002, 10.0)
    assert np.max(np.abs(f2 - two_fold_density(t, a, b))) <= 1e-6


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_convolve_oracle_normalised(n):
    # trapezoid error grows like n h^2, so the grid has to be fine
    t, fn = convolve_oracle(UNIT, n, 0.001, 40.0)
    assert trapezoid(fn, t) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_oracle_transform_matches_power(n):
    t, fn = convolve_oracle(UNIT, n, 0.002, 60.0)
    for s in (0.3, 1.0):
        assert trapezoid(np.exp(-s * t) * fn, t) == pytest.approx(laplace_cycle(s, UNIT.rates).real ** n,
                                                                  abs=1e-6)


def test_convolve_oracle_guards():
    with pytest.raises(ValueError):
        convolve_oracle(UNIT, 9, 0.01, 5.0)
    with pytest.warns(UserWarning):
        convolve_oracle(UNIT, 1, 0.5, 5.0)


def test_two_route_equivalence():
    T = 10.0
    probs = counting_distribution(UNIT, WindowSpec(T), 40).probs
    K = [1.0] + [k_n_oracle(UNIT, n, T, 0.005) for n in range(1, 7)]
    for n in range(6):
        assert probs[n] == pytest.approx(K[n] - K[n + 1], abs=2e-5)


# counting distribution

def test_counting_distribution_moments():
    w = WindowSpec(5.0)
    dist = counting_distribution(UNIT, w, 40)
    assert dist.probs.sum() == pytest.approx(1.0, abs=1e-6)
    assert dist.mean() == pytest.approx(mean_finite(UNIT.rates, w), rel=1e-4)
    assert dist.variance() == pytest.approx(var_finite(UNIT.rates, w), rel=1e-4)
    assert abs(dist.tail_mass) < 1e-8


def test_counting_distribution_tiny_window():
    probs = counting_distribution(UNIT, WindowSpec(1e-4), 5).probs
    assert probs[0] == pytest.approx(1.0, abs=1e-8)
    assert np.all(probs[1:] < 1e-8)


@pytest.mark.parametrize("T", [0.5, 3.0, 12.0])
def test_k_n_monotone(T):
    kind = Lossy(RateParams(2.0, 1.0), 0.7)
    K = [k_n(kind, n, T) for n in range(1, 8)]
    assert all(x >= y - 1e-9 for x, y in zip(K, K[1:]))


def test_deadtime_distribution_normalised_and_consistent():
    kind = LossyDeadtime(RateParams(2.0, 1.0), DetectorParams(0.5, 0.5))
    w = WindowSpec(6.0)
    dist = counting_distribution(kind, w, 40)
    m, v = moments_by_inversion(kind, w)
    assert dist.probs.sum() == pytest.approx(1.0, abs=1e-5)
    assert dist.mean() == pytest.approx(m, abs=1e-5)
    assert dist.variance() == pytest.approx(v, abs=1e-5)
    # at most floor(T/D) + 1 detections fit in the window
    assert np.all(dist.probs[14:] < 1e-6)


def test_moments_by_inversion_match_closed_form():
    w = WindowSpec(3.0)
    m, v = moments_by_inversion(UNIT, w)
    assert m == pytest.approx(mean_finite(UNIT.rates, w), rel=1e-9)
    assert v == pytest.approx(var_finite(UNIT.rates, w), rel=1e-8)


def test_small_n_max_warns():
    with pytest.warns(UserWarning, match="n_max"):
        counting_distribution(UNIT, WindowSpec(20.0), 5)


def test_talbot_rejected_for_deadtime():
    kind = LossyDeadtime(RateParams(1.0, 1.0), DetectorParams(0.5, 0.2))
    with pytest.raises(ValueError, match="Talbot"):
        counting_distribution(kind, WindowSpec(2.0), 10, InversionConfig("talbot"))


def test_talbot_agrees_with_euler():
    kind = Lossy(RateParams(3.0, 1.0), 0.4)
    w = WindowSpec(4.0)
    a = counting_distribution(kind, w, 30).probs
    b = counting_distribution(kind, w, 30, InversionConfig("talbot")).probs
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_unreachable_precision_raises_with_index():
    kind = LossyDeadtime(RateParams(1.0, 1.0), DetectorParams(0.5, 0.5))
    cfg = InversionConfig(node_count=16, precision_target=1e-12, max_node_count=32)
    with pytest.raises(InversionError) as info:
        counting_distribution(kind, WindowSpec(5.0), 20, cfg)
    assert info.value.index is not None and info.value.t == 5.0


@pytest.mark.parametrize("kw", [dict(method="stehfest"), dict(node_count=4),
                                dict(precision_target=1e-14), dict(node_count=128, max_node_count=64)])
def test_config_validated(kw):
    with pytest.raises(ValueError):
        InversionConfig(**kw)


def test_for_kind_relaxes_deadtime_target():
    kind = LossyDeadtime(RateParams(1.0, 1.0), DetectorParams(0.5, 0.5))
    assert InversionConfig.for_kind(kind).precision_target == 1e-6
    assert InversionConfig.for_kind(UNIT).precision_target == 1e-10
