import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from spsstats.model import (
    DetectorParams,
    DomainError,
    IdealCycle,
    Lossy,
    LossyDeadtime,
    PumpParams,
    RateParams,
    detection_model,
    laplace_cycle,
    laplace_deadtime,
    laplace_deadtime_closed_form,
    laplace_lossy,
    laplace_lossy_series,
    lossy_survival,
    pdf_abs,
    pdf_cycle,
    pdf_deadtime,
    pdf_em,
    pdf_lossy,
    pgf_laplace,
    root_pair,
)

rate = st.floats(1e-2, 1e2)
eta_st = st.floats(0.01, 1.0)


def integrate(f, lo=0.0):
    # split at a kink-free point so quad sees the bulk of the mass
    return quad(f, lo, lo + 50, limit=400)[0] + quad(f, lo + 50, np.inf, limit=200)[0]


# single-step densities

def test_pdf_abs_support_and_origin():
    p = RateParams(2.0, 1.0)
    assert pdf_abs(-1.0, p) == 0.0
    assert pdf_abs(0.0, p) == pytest.approx(2.0)
    assert quad(lambda t: pdf_abs(t, p), 0, np.inf)[0] == pytest.approx(1.0, abs=1e-10)


def test_pdf_em_values():
    p = RateParams(1.0, 1 / 5)
    assert pdf_em(-0.5, p) == 0.0
    assert pdf_em(0.0, p) == pytest.approx(0.2)
    median = math.log(2) / p.mu2
    assert quad(lambda t: pdf_em(t, p), 0, median)[0] == pytest.approx(0.5, abs=1e-12)


# cycle density

def test_pdf_cycle_vanishes_at_origin():
    assert pdf_cycle(0.0, RateParams(3.0, 0.7)) == 0.0


def test_pdf_cycle_equal_rates_limit():
    assert pdf_cycle(1.0, RateParams(1.0, 1.0)) == pytest.approx(math.exp(-1), rel=1e-14)
    # generic two-exponential form just off the degenerate point
    a, b = 1 + 1e-9, 1.0
    generic = a * b / (a - b) * (math.exp(-b) - math.exp(-a))
    assert pdf_cycle(1.0, RateParams(a, b)) == pytest.approx(generic, rel=1e-6)


def test_pdf_cycle_closed_form():
    assert pdf_cycle(1.0, RateParams(2.0, 1.0)) == pytest.approx(2 * (math.exp(-1) - math.exp(-2)))


@pytest.mark.parametrize("mu1,mu2", [(2.0, 1.0), (1.0, 1.0), (50.0, 0.1), (1 + 1e-12, 1.0)])
def test_pdf_cycle_normalised(mu1, mu2):
    p = RateParams(mu1, mu2)
    assert integrate(lambda t: pdf_cycle(t, p)) == pytest.approx(1.0, abs=1e-8)


@given(rate, st.floats(1e-8, 1e-4))
def test_pdf_cycle_continuous_across_equal_rates(mu, rel):
    # no switch between generic and degenerate formulas: nearby rates give nearby values
    t = 1.3 / mu
    v0 = pdf_cycle(t, RateParams(mu, mu))
    v1 = pdf_cycle(t, RateParams(mu * (1 + rel), mu))
    assert abs(v1 - v0) <= 5 * rel * v0 + 1e-300


# transforms

def test_laplace_cycle_examples():
    p = RateParams(1.0, 1.0)
    assert laplace_cycle(0.0, p) == pytest.approx(1.0)
    assert laplace_cycle(1.0, p) == pytest.approx(0.25)


@pytest.mark.parametrize("mu1,mu2", [(1.0, 1.0), (2.0, 0.5), (10.0, 3.0)])
def test_laplace_cycle_derivative_is_mean(mu1, mu2):
    p = RateParams(mu1, mu2)
    h = 1e-20
    deriv = -np.imag(laplace_cycle(1j * h, p)) / h  # complex step
    mean = quad(lambda t: t * pdf_cycle(t, p), 0, np.inf)[0]
    assert deriv == pytest.approx(1 / mu1 + 1 / mu2, rel=1e-12)
    assert mean == pytest.approx(deriv, rel=1e-8)


def test_laplace_pole_raises():
    with pytest.raises(DomainError):
        laplace_cycle(-1.0, RateParams(1.0, 2.0))


def test_root_pair_examples():
    r = root_pair(RateParams(1.0, 1.0), 1.0)
    assert (r.mu_p, r.mu_m) == pytest.approx((2.0, 2.0))
    r = root_pair(RateParams(1.0, 1.0), 0.5)
    assert (r.mu_p, r.mu_m) == pytest.approx((2 + math.sqrt(2), 2 - math.sqrt(2)))


@given(rate, rate, eta_st)
def test_root_pair_vieta(mu1, mu2, eta):
    r = root_pair(RateParams(mu1, mu2), eta)
    assert r.mu_p * r.mu_m == pytest.approx(4 * eta * mu1 * mu2, rel=1e-12)
    assert r.mu_p + r.mu_m == pytest.approx(2 * (mu1 + mu2), rel=1e-12)
    assert 0 < r.mu_m <= r.mu_p


def test_laplace_lossy_examples():
    p = RateParams(1.0, 1.0)
    assert laplace_lossy(0.0, p, 0.3) == pytest.approx(1.0)
    assert laplace_lossy(1.0, p, 0.5) == pytest.approx(1 / 7)


@given(rate, rate, eta_st, st.floats(0.0, 100.0), st.floats(-50.0, 50.0))
def test_lossy_transform_matches_geometric_series(mu1, mu2, eta, re, im):
    p = RateParams(mu1, mu2)
    s = complex(re, im)
    assert laplace_lossy(s, p, eta) == pytest.approx(laplace_lossy_series(s, p, eta), rel=1e-10, abs=1e-300)


@given(rate, rate, st.floats(0.0, 100.0))
def test_identity_chain_at_full_efficiency(mu1, mu2, s):
    p = RateParams(mu1, mu2)
    c = laplace_cycle(s, p)
    assert laplace_lossy(s, p, 1.0) == pytest.approx(c, rel=1e-12)
    assert laplace_deadtime(s, p, DetectorParams(1.0, 0.0)) == pytest.approx(c, rel=1e-12)


@given(rate, rate, st.floats(0.0, 20.0))
def test_pdf_lossy_identity(mu1, mu2, t):
    p = RateParams(mu1, mu2)
    assert pdf_lossy(t, p, 1.0) == pytest.approx(pdf_cycle(t, p), rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("eta", [1.0, 0.5, 0.01])
def test_pdf_lossy_normalised(eta):
    p = RateParams(3.0, 0.5)
    assert integrate(lambda t: pdf_lossy(t, p, eta)) == pytest.approx(1.0, abs=1e-8)


def test_lossy_survival_consistent_with_density():
    p = RateParams(2.0, 0.7)
    for t in (0.1, 1.0, 5.0):
        tail = quad(lambda u: pdf_lossy(u, p, 0.4), t, np.inf)[0]
        assert lossy_survival(t, p, 0.4) == pytest.approx(tail, rel=1e-9)


def test_pdf_deadtime_identity_and_support():
    p = RateParams(2.0, 1.0)
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(pdf_deadtime(t, p, DetectorParams(0.6, 0.0)), pdf_lossy(t, p, 0.6),
                               rtol=1e-12)
    D = 0.7
    assert pdf_deadtime(D - 1e-9, p, DetectorParams(0.6, D)) == 0.0
    assert pdf_deadtime(D, p, DetectorParams(0.6, D)) > 0


@pytest.mark.parametrize("mu1,mu2,eta,D", [
    (1.0, 1.0, 0.5, 0.5), (10.0, 1.0, 0.5, 0.1), (0.1, 1.0, 0.9, 3.0), (1.0, 1.0, 1.0, 1.0),
])
def test_pdf_deadtime_normalised(mu1, mu2, eta, D):
    p = RateParams(mu1, mu2)
    det = DetectorParams(eta, D)
    assert integrate(lambda t: pdf_deadtime(t, p, det), D) == pytest.approx(1.0, abs=1e-8)


def test_laplace_deadtime_examples():
    p = RateParams(1.5, 1.0)
    det = DetectorParams(0.5, 0.4)
    assert laplace_deadtime(0.0, p, det) == pytest.approx(1.0, abs=1e-14)
    for s in (0.3, 2.0, 7.0):
        assert laplace_deadtime(s, p, DetectorParams(0.5, 0.0)) == pytest.approx(laplace_lossy(s, p, 0.5))
    ref = quad(lambda t: math.exp(-2 * t) * pdf_deadtime(t, p, det), det.deadtime, np.inf)[0]
    assert laplace_deadtime(2.0, p, det).real == pytest.approx(ref, rel=1e-9)


@given(rate, rate, st.floats(0.05, 0.95), st.floats(0.0, 3.0), st.floats(0.0, 10.0))
def test_stable_deadtime_transform_matches_closed_form(mu1, mu2, eta, Dtau, s):
    p = RateParams(mu1, mu2)
    det = DetectorParams(eta, Dtau / mu2)
    a = laplace_deadtime(s, p, det)
    b = laplace_deadtime_closed_form(s, p, det)
    assert a == pytest.approx(b, rel=1e-7, abs=1e-290)


def test_closed_form_degenerate_point_raises():
    with pytest.raises(DomainError):
        laplace_deadtime_closed_form(1.0, RateParams(1.0, 1.0), DetectorParams(1.0, 0.0))


def test_pgf_laplace_examples():
    s, f = 0.7, 0.3
    assert pgf_laplace(s, 1.0, f) == pytest.approx(1 / s)
    assert pgf_laplace(s, 0.0, f) == pytest.approx((1 - f) / s)
    assert pgf_laplace(s, 0.4, 0.0) == pytest.approx(1 / s)
    with pytest.raises(DomainError):
        pgf_laplace(0.0, 0.5, f)


# parameter types

@pytest.mark.parametrize("kw", [dict(mu1=0, mu2=1), dict(mu1=1, mu2=-1), dict(mu1=math.nan, mu2=1),
                                dict(mu1=math.inf, mu2=1)])
def test_rate_params_validated(kw):
    with pytest.raises(ValueError):
        RateParams(**kw)


@pytest.mark.parametrize("eta,D", [(0.0, 0.0), (1.5, 0.0), (0.5, -1.0), (0.5, math.inf)])
def test_detector_params_validated(eta, D):
    with pytest.raises(ValueError):
        DetectorParams(eta, D)


def test_pump_params():
    r = PumpParams(alpha=2.0, power=3.0, tau=0.5).to_rates()
    assert (r.mu1, r.mu2) == (6.0, 2.0)
    with pytest.raises(ValueError):
        PumpParams(1.0, 0.0, 1.0).to_rates()


def test_detection_model_picks_simplest():
    p = RateParams(1.0, 2.0)
    assert isinstance(detection_model(p), IdealCycle)
    assert isinstance(detection_model(p, DetectorParams(0.5)), Lossy)
    assert isinstance(detection_model(p, DetectorParams(0.5, 0.1)), LossyDeadtime)
    assert isinstance(detection_model(p, DetectorParams(1.0, 0.1)), LossyDeadtime)
