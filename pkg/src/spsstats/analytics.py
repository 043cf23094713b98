"""Closed-form counting statistics: finite-window and long-window moments, Fano factors, sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    DetectorParams,
    DistributionKind,
    IdealCycle,
    Lossy,
    LossyDeadtime,
    PumpParams,
    RateParams,
    _check_eta,
    _halfgap,
    _sinh_ratio,
    detection_model,
)


@dataclass(frozen=True)
class WindowSpec:
    """Length ``duration`` of one counting window."""

    duration: float

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"window duration must be positive and finite, got {self.duration!r}")


@dataclass(frozen=True)
class MomentPair:
    """First two raw moments of the inter-detection interval."""

    m1: float
    m2: float

    @property
    def variance(self) -> float:
        return self.m2 - self.m1**2


@dataclass(frozen=True)
class SaturationResult:
    rate_asymptotic: float
    rate_saturation: float
    power_saturation: float


@dataclass
class FanoCurve:
    """Fano factor sampled on a grid of ``mu1/mu2`` ratios."""

    ratios: np.ndarray
    fano: np.ndarray
    eta: float = 1.0
    deadtime_over_tau: float = 0.0
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ratios = np.asarray(self.ratios, dtype=float)
        self.fano = np.asarray(self.fano, dtype=float)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)

    def __len__(self):
        return len(self.ratios)

    def minimum(self) -> tuple[float, float]:
        """Grid point with the smallest Fano factor as ``(ratio, fano)``."""
        i = int(np.argmin(self.fano))
        return float(self.ratios[i]), float(self.fano[i])

    def interior_minima(self) -> list[int]:
        """Indices of strict local minima that are not grid endpoints."""
        f = self.fano
        return [i for i in range(1, len(f) - 1) if f[i] < f[i - 1] and f[i] < f[i + 1]]


def ratio_grid(lo: float = 1e-3, hi: float = 1e3, points: int = 121) -> np.ndarray:
    """Logarithmic grid of ``mu1/mu2`` ratios."""
    if not (0 < lo < hi) or points < 2:
        raise ValueError("need 0 < lo < hi and at least two points")
    return np.logspace(math.log10(lo), math.log10(hi), points)


def _relax(x: float) -> float:
    """exp(-x) - 1 + x, by its Taylor series where the direct form cancels."""
    if x >= 0.5:
        return x + math.expm1(-x)
    term, total, k = x * x / 2.0, 0.0, 2
    while abs(term) > 1e-18 * abs(total) or total == 0.0:
        total += term
        k += 1
        term *= -x / k
        if term == 0.0:
            break
    return total


def mean_finite(p: RateParams, w: WindowSpec) -> float:
    """Mean photon count in ``[0, T]`` after the pump is switched on at t = 0."""
    a, b = p.mu1, p.mu2
    return a * b / (a + b) ** 2 * _relax((a + b) * w.duration)


def var_finite(p: RateParams, w: WindowSpec) -> float:
    """Count variance in ``[0, T]`` after switch-on.

    With ``s = mu1 + mu2``, ``q = mu1 mu2``, ``x = s T`` and ``u = exp(-x) - 1``
    the bracket is regrouped as ``(s^2 - 6q)(x + u) - q u (4x + u)`` so that
    neither small nor large windows lose precision.
    """
    s, q = p.mu1 + p.mu2, p.mu1 * p.mu2
    x = s * w.duration
    u = math.expm1(-x)
    bracket = (s * s - 6.0 * q) * _relax(x) - q * u * (4.0 * x + u)
    return q / s**4 * bracket


def finite_window_offsets(p: RateParams) -> tuple[float, float]:
    """Constant terms by which the finite-window mean and variance trail their linear
    long-window asymptotes (all remaining corrections decay like exp(-(mu1+mu2) T))."""
    a, b = p.mu1, p.mu2
    return -a * b / (a + b) ** 2, a * b * (3 * a * b - a * a - b * b) / (a + b) ** 4


def mean_asymptotic(p: RateParams, w: WindowSpec, eta: float = 1.0) -> float:
    _check_eta(eta)
    return eta * p.mu1 * p.mu2 / (p.mu1 + p.mu2) * w.duration


def fano_ideal(p: RateParams) -> float:
    a, b = p.mu1, p.mu2
    return (a * a + b * b) / (a + b) ** 2


def fano_lossy(p: RateParams, eta: float) -> float:
    _check_eta(eta)
    a, b = p.mu1, p.mu2
    return (a * a + 2.0 * (1.0 - eta) * a * b + b * b) / (a + b) ** 2


def renewal_moments(kind: DistributionKind) -> MomentPair:
    """Raw moments ``E[X]``, ``E[X^2]`` of the inter-detection interval ``X``."""
    p = kind.rates
    if isinstance(kind, IdealCycle):
        i1, i2 = 1.0 / p.mu1, 1.0 / p.mu2
        return MomentPair(i1 + i2, 2.0 * (i1 * i1 + i1 * i2 + i2 * i2))
    total = p.mu1 + p.mu2
    ab = kind.eta * p.mu1 * p.mu2
    if isinstance(kind, Lossy):
        return MomentPair(total / ab, 2.0 * (total * total - ab) / ab**2)
    if not isinstance(kind, LossyDeadtime):
        raise TypeError(f"unknown distribution kind {kind!r}")
    D = kind.deadtime
    ey, ey2 = _excess_moments(kind)
    return MomentPair(D + ey, ey2 + 2.0 * D * ey + D * D)


def _excess_moments(kind: LossyDeadtime) -> tuple[float, float]:
    """E[Y], E[Y^2] for the excess Y = X - D of the truncated lossy interval.

    Y is a two-exponential mixture; ``c`` is the mean decay constant, ``d``
    the half-gap, and the sinh/cosh factors are scaled by exp(-d D).
    """
    p = kind.rates
    ab = kind.eta * p.mu1 * p.mu2
    D = kind.deadtime
    c = 0.5 * (p.mu1 + p.mu2)
    d = _halfgap(p, kind.eta)
    sh = float(_sinh_ratio(d, D))
    ch = 0.5 * (1.0 + math.exp(-2.0 * d * D))
    z = c * sh + ch
    ey = ((c * c + d * d) * sh + 2.0 * c * ch) / (z * ab)
    ey2 = 2.0 * ((c**3 + 3.0 * c * d * d) * sh + (3.0 * c * c + d * d) * ch) / (z * ab * ab)
    return ey, ey2


def interval_variance(kind: DistributionKind) -> float:
    """Variance of the inter-detection interval, avoiding m2 - m1^2 where a direct form exists."""
    p = kind.rates
    if isinstance(kind, IdealCycle):
        return 1.0 / p.mu1**2 + 1.0 / p.mu2**2
    if isinstance(kind, Lossy):
        total = p.mu1 + p.mu2
        ab = kind.eta * p.mu1 * p.mu2
        return (total * total - 2.0 * ab) / ab**2
    # truncation at D shifts the interval but Var(X) = Var(Y)
    ey, ey2 = _excess_moments(kind)
    return ey2 - ey * ey


def fano_asymptotic(kind: DistributionKind) -> float:
    """Long-window Fano factor of a renewal count, ``Var(X) / E[X]^2``."""
    m1 = renewal_moments(kind).m1
    return interval_variance(kind) / (m1 * m1)


def saturation(pp: PumpParams) -> SaturationResult:
    i_sat = 1.0 / pp.tau
    p_sat = 1.0 / (pp.tau * pp.alpha)
    return SaturationResult(i_sat * pp.power / (pp.power + p_sat), i_sat, p_sat)


def deadtime_rate(nu_in: float, D: float) -> float:
    """Recorded rate of a non-paralyzable detector fed with rate ``nu_in``."""
    if nu_in < 0 or D < 0:
        raise ValueError("rate and dead time must be non-negative")
    if math.isinf(nu_in):
        return 1.0 / D if D > 0 else math.inf
    return nu_in / (1.0 + D * nu_in)


def fano_curve(ratio_grid, mu2: float = 1.0, eta: float = 1.0,
               deadtime_over_tau: float = 0.0) -> FanoCurve:
    """Long-window Fano factor along ``mu1 = ratio * mu2`` with ``D = deadtime_over_tau / mu2``."""
    ratios = np.asarray(ratio_grid, dtype=float)
    if ratios.ndim != 1 or ratios.size == 0:
        raise ValueError("ratio grid must be a non-empty 1-d sequence")
    if np.any(ratios <= 0) or np.any(np.diff(ratios) <= 0):
        raise ValueError("ratio grid must be positive and strictly increasing")
    detector = DetectorParams(eta, deadtime_over_tau / mu2)
    fano = np.array([
        fano_asymptotic(detection_model(RateParams(r * mu2, mu2), detector)) for r in ratios
    ])
    return FanoCurve(ratios, fano, eta, deadtime_over_tau)
