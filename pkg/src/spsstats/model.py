"""Inter-event densities of a continuously pumped two-level emitter.

Three detection models share one interface:

* :class:`IdealCycle` -- every emitted photon is recorded; the interval is
  the absorption wait plus the emission wait (a hypoexponential law).
* :class:`Lossy` -- each photon is kept with probability ``eta``; the
  interval between recorded photons is a geometric mixture of n-fold cycles.
* :class:`LossyDeadtime` -- the lossy interval truncated below the detector
  dead time ``D`` and renormalised.

All functions accept numpy arrays (real ``t``, complex ``s``) and broadcast.
Rates and times are dimensionless; only ratios such as ``mu1/mu2`` and
``mu2*D`` matter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np


class DomainError(ValueError):
    """A transform was evaluated at one of its poles (or at s = 0 where 1/s appears)."""


@dataclass(frozen=True)
class RateParams:
    """Absorption rate ``mu1`` and emission rate ``mu2`` (= 1/tau)."""

    mu1: float
    mu2: float

    def __post_init__(self):
        for name in ("mu1", "mu2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    @property
    def tau(self) -> float:
        return 1.0 / self.mu2

    @property
    def ratio(self) -> float:
        return self.mu1 / self.mu2


@dataclass(frozen=True)
class PumpParams:
    """Pump coupling ``alpha``, excitation ``power`` and excited-state lifetime ``tau``."""

    alpha: float
    power: float
    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha!r}")
        if not (math.isfinite(self.power) and self.power >= 0):
            raise ValueError(f"power must be non-negative and finite, got {self.power!r}")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive and finite, got {self.tau!r}")

    def to_rates(self) -> RateParams:
        if self.power == 0:
            raise ValueError("power = 0 gives a zero absorption rate; no cycle exists")
        return RateParams(self.alpha * self.power, 1.0 / self.tau)


@dataclass(frozen=True)
class DetectorParams:
    """Detection efficiency ``eta`` in (0, 1] and non-paralyzable dead time ``deadtime``."""

    eta: float = 1.0
    deadtime: float = 0.0

    def __post_init__(self):
        if not (0 < self.eta <= 1):
            raise ValueError(f"eta must lie in (0, 1], got {self.eta!r}")
        if not (math.isfinite(self.deadtime) and self.deadtime >= 0):
            raise ValueError(f"deadtime must be non-negative and finite, got {self.deadtime!r}")


@dataclass(frozen=True)
class RootPair:
    """Decay constants of the lossy density; the exponents are ``mu_m/2`` and ``mu_p/2``."""

    mu_p: float
    mu_m: float

    @property
    def slow(self) -> float:
        return 0.5 * self.mu_m

    @property
    def fast(self) -> float:
        return 0.5 * self.mu_p


def _check_eta(eta):
    if not (0 < eta <= 1):
        raise ValueError(f"eta must lie in (0, 1], got {eta!r}")


def _halfgap(p: RateParams, eta: float) -> float:
    # sqrt((mu1+mu2)^2 - 4 eta mu1 mu2) / 2, written as a sum of non-negative terms
    disc = (p.mu1 - p.mu2) ** 2 + 4.0 * (1.0 - eta) * p.mu1 * p.mu2
    return 0.5 * math.sqrt(disc)


def root_pair(p: RateParams, eta: float = 1.0) -> RootPair:
    _check_eta(eta)
    total = p.mu1 + p.mu2
    mu_p = total + 2.0 * _halfgap(p, eta)
    mu_m = 4.0 * eta * p.mu1 * p.mu2 / mu_p
    return RootPair(mu_p, mu_m)


def _sinh_ratio(d, t):
    """exp(-d t) sinh(d t) / d, i.e. (1 - exp(-2 d t)) / (2 d); tends to t as d -> 0."""
    t = np.asarray(t, dtype=float)
    if d == 0:
        return t * 1.0
    return -np.expm1(-2.0 * d * t) / (2.0 * d)


def _decay_pair(mu1, mu2):
    """Slow decay constant and half-gap of a two-exponential density."""
    d = 0.5 * abs(mu1 - mu2)
    return min(mu1, mu2), d


def _support(t, lower=0.0):
    t = np.asarray(t, dtype=float)
    inside = t >= lower
    return np.where(inside, t, lower), inside


def pdf_abs(t, p: RateParams):
    tt, inside = _support(t)
    return np.where(inside, p.mu1 * np.exp(-p.mu1 * tt), 0.0)


def pdf_em(t, p: RateParams):
    tt, inside = _support(t)
    return np.where(inside, p.mu2 * np.exp(-p.mu2 * tt), 0.0)


def pdf_cycle(t, p: RateParams):
    """Density of one absorption-emission cycle (convolution of the two exponentials).

    Evaluated as ``mu1 mu2 exp(-a t) (1 - exp(-2 d t)) / (2 d)`` with ``a`` the
    slower rate and ``d`` the half-gap, which is exact and cancellation-free
    at ``mu1 == mu2`` where it reduces to ``mu^2 t exp(-mu t)``.
    """
    tt, inside = _support(t)
    a, d = _decay_pair(p.mu1, p.mu2)
    return np.where(inside, p.mu1 * p.mu2 * np.exp(-a * tt) * _sinh_ratio(d, tt), 0.0)


def pdf_lossy(t, p: RateParams, eta: float):
    """Density of the interval between recorded photons when each is kept with probability eta."""
    r = root_pair(p, eta)
    d = _halfgap(p, eta)
    tt, inside = _support(t)
    # mu_p mu_m / 4 = eta mu1 mu2
    return np.where(inside, eta * p.mu1 * p.mu2 * np.exp(-r.slow * tt) * _sinh_ratio(d, tt), 0.0)


def lossy_survival(t, p: RateParams, eta: float):
    """P(X > t) for the lossy interval X; equals 1 for t <= 0."""
    r = root_pair(p, eta)
    d = _halfgap(p, eta)
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    return np.exp(-r.slow * t) * (r.slow * _sinh_ratio(d, t) + 1.0)


def pdf_deadtime(t, p: RateParams, d: DetectorParams):
    """Lossy density truncated to ``t >= D`` and renormalised."""
    D = d.deadtime
    r = root_pair(p, d.eta)
    gap = _halfgap(p, d.eta)
    tt, inside = _support(t, D)
    # survival at D carries exp(-slow D); fold it into the exponent to avoid underflow
    val = (d.eta * p.mu1 * p.mu2 * np.exp(-r.slow * (tt - D)) * _sinh_ratio(gap, tt)
           / (r.slow * _sinh_ratio(gap, D) + 1.0))
    return np.where(inside, val, 0.0)


def _pole_guard(den, what):
    if np.any(den == 0):
        raise DomainError(f"{what} evaluated at a pole")


def _finish(out):
    return out if out.ndim else complex(out)


def laplace_cycle(s, p: RateParams):
    s = np.asarray(s, dtype=complex)
    den = (p.mu1 + s) * (p.mu2 + s)
    _pole_guard(den, "laplace_cycle")
    return _finish(p.mu1 * p.mu2 / den)


def laplace_lossy(s, p: RateParams, eta: float):
    _check_eta(eta)
    s = np.asarray(s, dtype=complex)
    r = root_pair(p, eta)
    den = (s + r.slow) * (s + r.fast)
    _pole_guard(den, "laplace_lossy")
    return _finish(eta * p.mu1 * p.mu2 / den)


def laplace_lossy_series(s, p: RateParams, eta: float):
    """Geometric-series form eta f/(1 - (1-eta) f) of the lossy transform."""
    _check_eta(eta)
    f = np.asarray(laplace_cycle(s, p))
    den = 1.0 - (1.0 - eta) * f
    _pole_guard(den, "laplace_lossy_series")
    return _finish(eta * f / den)


def laplace_deadtime(s, p: RateParams, d: DetectorParams):
    """Transform of the truncated lossy density.

    Computed as ``exp(-s D) ab ((s+a) S + 1) / ((s+a)(s+b)(a S + 1))`` with
    ``a, b`` the two decay constants and ``S = (1 - exp(-(b-a) D))/(b-a)``;
    algebraically the same as :func:`laplace_deadtime_closed_form` but free of
    cancellation when ``a ~ b`` and of underflow for large ``D``.
    """
    D = d.deadtime
    r = root_pair(p, d.eta)
    a, b = r.slow, r.fast
    s = np.asarray(s, dtype=complex)
    den = (s + a) * (s + b)
    _pole_guard(den, "laplace_deadtime")
    S = _sinh_ratio(_halfgap(p, d.eta), D)
    out = np.exp(-s * D) * d.eta * p.mu1 * p.mu2 * ((s + a) * S + 1.0) / (den * (a * S + 1.0))
    return _finish(out)


def laplace_deadtime_closed_form(s, p: RateParams, d: DetectorParams):
    """Direct transcription of the truncated-density transform in terms of mu_p, mu_m.

    Loses accuracy when ``mu_p ~ mu_m``; kept as an independent reference.
    """
    D = d.deadtime
    r = root_pair(p, d.eta)
    s = np.asarray(s, dtype=complex)
    lo = 2.0 * s + r.mu_m
    hi = 2.0 * s + r.mu_p
    _pole_guard(lo * hi, "laplace_deadtime_closed_form")
    num = r.mu_p * r.mu_m * (2.0 * np.exp(-0.5 * lo * D) / lo - 2.0 * np.exp(-0.5 * hi * D) / hi)
    den = 2.0 * (r.mu_p * math.exp(-0.5 * r.mu_m * D) - r.mu_m * math.exp(-0.5 * r.mu_p * D))
    if den == 0:
        raise DomainError("closed form is 0/0 at mu_p == mu_m")
    return _finish(num / den)


def pgf_laplace(s, xi, ftilde):
    """Laplace transform (in the window length) of the counting generating function."""
    s = np.asarray(s, dtype=complex)
    ftilde = np.asarray(ftilde, dtype=complex)
    den = 1.0 - xi * ftilde
    if np.any(s == 0):
        raise DomainError("pgf_laplace has a pole at s = 0")
    _pole_guard(den, "pgf_laplace")
    return _finish((1.0 - ftilde) / (s * den))


@dataclass(frozen=True)
class IdealCycle:
    rates: RateParams

    eta = 1.0
    deadtime = 0.0

    def pdf(self, t):
        return pdf_cycle(t, self.rates)

    def laplace(self, s):
        return laplace_cycle(s, self.rates)


@dataclass(frozen=True)
class Lossy:
    rates: RateParams
    eta: float

    deadtime = 0.0

    def __post_init__(self):
        _check_eta(self.eta)

    def pdf(self, t):
        return pdf_lossy(t, self.rates, self.eta)

    def laplace(self, s):
        return laplace_lossy(s, self.rates, self.eta)


@dataclass(frozen=True)
class LossyDeadtime:
    rates: RateParams
    detector: DetectorParams

    @property
    def eta(self) -> float:
        return self.detector.eta

    @property
    def deadtime(self) -> float:
        return self.detector.deadtime

    def pdf(self, t):
        return pdf_deadtime(t, self.rates, self.detector)

    def laplace(self, s):
        return laplace_deadtime(s, self.rates, self.detector)


DistributionKind = Union[IdealCycle, Lossy, LossyDeadtime]


def detection_model(rates: RateParams, detector: DetectorParams | None = None) -> DistributionKind:
    """Pick the simplest model that represents ``detector``."""
    if detector is None or (detector.eta == 1 and detector.deadtime == 0):
        return IdealCycle(rates)
    if detector.deadtime == 0:
        return Lossy(rates, detector.eta)
    return LossyDeadtime(rates, detector)
