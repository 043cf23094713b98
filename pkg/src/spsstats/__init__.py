"""Photon-counting statistics of a continuously pumped two-level single-photon emitter.

Closed-form long- and finite-window moments, counting distributions by
numerical Laplace inversion, and a Monte Carlo simulator with detection
losses and a non-paralyzable dead time.
"""
__version__ = "0.1.0"

from .model import (
    DetectorParams,
    DomainError,
    IdealCycle,
    Lossy,
    LossyDeadtime,
    PumpParams,
    RateParams,
    detection_model,
)
from .analytics import (
    FanoCurve,
    WindowSpec,
    fano_asymptotic,
    fano_curve,
    fano_ideal,
    fano_lossy,
    mean_finite,
    renewal_moments,
    var_finite,
)
from .inversion import InversionConfig, InversionError, counting_distribution
from .simulator import SimConfig, SimMode, SimulationError, simulate, window_stats

__all__ = [
    "DetectorParams", "DomainError", "IdealCycle", "Lossy", "LossyDeadtime", "PumpParams",
    "RateParams", "detection_model", "FanoCurve", "WindowSpec", "fano_asymptotic", "fano_curve",
    "fano_ideal", "fano_lossy", "mean_finite", "renewal_moments", "var_finite",
    "InversionConfig", "InversionError", "counting_distribution", "SimConfig", "SimMode",
    "SimulationError", "simulate", "window_stats",
]
