"""Monte Carlo event streams and window-count statistics.

Two generators:

* ``physical`` -- the emitter cycles through Exp(mu1) + Exp(mu2) waits and
  emits at the end of each cycle; each photon survives losses with
  probability ``eta``; survivors are then gated by a non-paralyzable
  detector (recorded only if at least ``D`` after the previous recorded
  photon).  The emitter is never affected by the detector.
* ``renewal`` -- inter-detection intervals drawn i.i.d. from the renewal law of
  the detection model: a cycle, a geometric number of cycles, or that sum
  conditioned to exceed ``D``.

For ``D = 0`` both describe the same process.  For ``D > 0`` they differ: after
a dead period the emitter is mid-cycle rather than renewed.

Each simulated trace starts at pump switch-on (t = 0) and covers
``windows_per_trace`` contiguous windows; traces are laid end to end so the
result is a single increasing timeline.  Traces are grouped in fixed blocks,
each with its own child stream of the master seed, so the output does not
depend on ``n_jobs``.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytics import FanoCurve, WindowSpec, fano_asymptotic, interval_variance, renewal_moments
from .model import DetectorParams, RateParams, detection_model, lossy_survival

log = logging.getLogger(__name__)

JACKKNIFE_BATCHES = 20
MAX_STREAM_BLOCKS = 64
MIN_SURVIVAL = 1e-6


class SimulationError(RuntimeError):
    pass


class SimMode(str, enum.Enum):
    PHYSICAL = "physical"
    RENEWAL = "renewal"


@dataclass(frozen=True)
class SimConfig:
    rates: RateParams
    window: WindowSpec
    window_count: int
    detector: DetectorParams = DetectorParams()
    seed: int = 0
    mode: SimMode = SimMode.PHYSICAL
    windows_per_trace: int | None = None
    burn_in: float = 0.0
    keep_emissions: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", SimMode(self.mode))
        if self.window_count < 2:
            raise ValueError("window_count must be at least 2")
        wpt = self.windows_per_trace
        if wpt is None:
            wpt = self.window_count // math.gcd(self.window_count, JACKKNIFE_BATCHES)
            object.__setattr__(self, "windows_per_trace", wpt)
        if wpt < 1 or self.window_count % wpt:
            raise ValueError("windows_per_trace must be a positive divisor of window_count")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")
        m1 = renewal_moments(self.model).m1
        if self.window.duration < 10 * m1:
            warnings.warn(f"window T={self.window.duration:g} is short compared with the mean "
                          f"interval {m1:g}; counts are far from the long-window limit",
                          stacklevel=3)

    @property
    def model(self):
        return detection_model(self.rates, self.detector)

    @property
    def n_traces(self) -> int:
        return self.window_count // self.windows_per_trace

    @property
    def horizon(self) -> float:
        return self.window_count * self.window.duration


@dataclass
class EventTrace:
    """Recorded detection times on ``[0, horizon)``.

    ``emissions`` (physical mode, optional) holds all emission times before
    losses; ``cycles`` (renewal mode) holds the number of emitter cycles that
    made up each inter-detection interval.
    """

    detections: np.ndarray
    horizon: float
    emissions: np.ndarray | None = None
    cycles: np.ndarray | None = None


@dataclass
class WindowStats:
    mean: float
    variance: float
    fano: float | None
    fano_stderr: float | None
    mean_stderr: float
    variance_stderr: float
    total_detections: int
    window_count: int
    window: WindowSpec
    fano_reason: str | None = None
    counts: np.ndarray = field(default=None, repr=False)
    config: SimConfig | None = field(default=None, repr=False)


# interval samplers -------------------------------------------------------

def _draw_cycles(rng, p: RateParams, size):
    return rng.exponential(1.0 / p.mu1, size) + rng.exponential(1.0 / p.mu2, size)


def _draw_lossy(rng, p: RateParams, eta, size):
    """Sum of a Geometric(eta) number of cycles; returns (interval, cycle count)."""
    n = rng.geometric(eta, size) if eta < 1 else np.ones(size, dtype=np.int64)
    x = rng.gamma(n, 1.0 / p.mu1) + rng.gamma(n, 1.0 / p.mu2)
    return x, n


def _draw_deadtime(rng, p: RateParams, det: DetectorParams, size):
    """Lossy interval conditioned on exceeding D, by rejection."""
    x, n = _draw_lossy(rng, p, det.eta, size)
    bad = x <= det.deadtime
    while bad.any():
        k = int(bad.sum())
        x[bad], n[bad] = _draw_lossy(rng, p, det.eta, k)
        bad = x <= det.deadtime
    return x, n


def _interval_sampler(cfg: SimConfig):
    p, det = cfg.rates, cfg.detector
    if cfg.mode is SimMode.PHYSICAL:
        return lambda rng, size: (_draw_cycles(rng, p, size), None)
    if det.deadtime > 0:
        survival = float(lossy_survival(det.deadtime, p, det.eta))
        if survival < MIN_SURVIVAL:
            raise SimulationError(
                f"P(interval > D) = {survival:.3g} is below {MIN_SURVIVAL:g}; rejection sampling "
                "of the truncated law would not terminate in reasonable time")
        return lambda rng, size: _draw_deadtime(rng, p, det, size)
    if det.eta < 1:
        return lambda rng, size: _draw_lossy(rng, p, det.eta, size)
    return lambda rng, size: (_draw_cycles(rng, p, size), np.ones(size, dtype=np.int64))


def _renewal_block(rng, sampler, n_tr, horizon, mean, sd):
    """Renewal times on [0, horizon) for ``n_tr`` independent traces (rows)."""
    expect = horizon / mean
    k = int(expect + 6.0 * sd / mean * math.sqrt(expect) + 16)
    x, aux = sampler(rng, (n_tr, k))
    times = [np.cumsum(x, axis=1)]
    auxes = [aux]
    k_more = max(16, k // 8)
    while times[-1][:, -1].min() < horizon:
        x, aux = sampler(rng, (n_tr, k_more))
        times.append(times[-1][:, -1:] + np.cumsum(x, axis=1))
        auxes.append(aux)
    times = np.hstack(times)
    auxes = np.hstack(auxes) if auxes[0] is not None else None
    return times, auxes


def _simulate_block(cfg: SimConfig, seed_seq, traces: np.ndarray):
    rng = np.random.default_rng(seed_seq)
    model = cfg.model
    if cfg.mode is SimMode.PHYSICAL:
        p = cfg.rates
        mean = 1.0 / p.mu1 + 1.0 / p.mu2
        sd = math.sqrt(1.0 / p.mu1**2 + 1.0 / p.mu2**2)
    else:
        mean = renewal_moments(model).m1
        sd = math.sqrt(interval_variance(model))
    span = cfg.windows_per_trace * cfg.window.duration
    horizon = span + cfg.burn_in
    times, aux = _renewal_block(rng, _interval_sampler(cfg), len(traces), horizon, mean, sd)
    inside = (times < horizon) & (times >= cfg.burn_in)
    offsets = (traces * span - cfg.burn_in)[:, None]
    shifted = times + offsets
    emissions = None
    if cfg.mode is SimMode.PHYSICAL:
        kept = inside & (rng.random(times.shape) < cfg.detector.eta)
        if cfg.keep_emissions:
            emissions = shifted[inside]
        return shifted[kept], emissions, None
    return shifted[inside], None, aux[inside]


def nonparalyzable_gate(times, deadtime: float) -> np.ndarray:
    """Keep each event only if it is at least ``deadtime`` after the last kept event."""
    times = np.asarray(times, dtype=float)
    if deadtime <= 0 or times.size == 0:
        return times
    kept = []
    last = -math.inf
    for t in times.tolist():
        if t - last >= deadtime:
            kept.append(t)
            last = t
    return np.array(kept)


def _blocks(cfg: SimConfig):
    traces = np.arange(cfg.n_traces)
    parts = np.array_split(traces, min(cfg.n_traces, MAX_STREAM_BLOCKS))
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(parts))
    return list(zip(seqs, parts))


def _run(cfg: SimConfig) -> EventTrace:
    blocks = _blocks(cfg)
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            results = list(pool.map(lambda b: _simulate_block(cfg, *b), blocks))
    else:
        results = [_simulate_block(cfg, *b) for b in blocks]
    detections = np.concatenate([r[0] for r in results])
    emissions = cycles = None
    if cfg.mode is SimMode.PHYSICAL:
        # the detector state carries over trace boundaries, so gate the whole timeline
        detections = nonparalyzable_gate(detections, cfg.detector.deadtime)
        if cfg.keep_emissions:
            emissions = np.concatenate([r[1] for r in results])
    else:
        cycles = np.concatenate([r[2] for r in results])
    return EventTrace(detections, cfg.horizon, emissions, cycles)


def simulate_physical(cfg: SimConfig) -> EventTrace:
    if cfg.mode is not SimMode.PHYSICAL:
        raise ValueError("simulate_physical needs a config in physical mode")
    return _run(cfg)


def simulate_renewal(cfg: SimConfig) -> EventTrace:
    if cfg.mode is not SimMode.RENEWAL:
        raise ValueError("simulate_renewal needs a config in renewal mode")
    return _run(cfg)


def simulate(cfg: SimConfig) -> EventTrace:
    return _run(cfg)


# statistics -------------------------------------------------------------

def _moments(n, s1, s2):
    mean = s1 / n
    var = (s2 - n * mean * mean) / (n - 1)
    return mean, max(var, 0.0)


def window_counts(trace: EventTrace, window: WindowSpec, window_count: int) -> np.ndarray:
    t = trace.detections
    if t.size and (t[0] < 0 or t[-1] >= window_count * window.duration):
        raise ValueError("trace extends beyond the configured horizon")
    idx = np.floor(t / window.duration).astype(np.int64)
    return np.bincount(idx, minlength=window_count)[:window_count]


def count_stats(counts, window: WindowSpec, batches: int = JACKKNIFE_BATCHES) -> WindowStats:
    """Mean, unbiased variance and Fano factor of window counts with batch-jackknife errors."""
    counts = np.asarray(counts)
    N = len(counts)
    if N < 2:
        raise ValueError("need at least two windows")
    c = counts.astype(float)
    mean, var = _moments(N, c.sum(), (c * c).sum())
    B = min(batches, N)
    parts = np.array_split(c, B)
    bs1 = np.array([p.sum() for p in parts])
    bs2 = np.array([(p * p).sum() for p in parts])
    bn = np.array([len(p) for p in parts])
    loo = [_moments(N - bn[b], c.sum() - bs1[b], (c * c).sum() - bs2[b]) for b in range(B)]
    loo_mean = np.array([m for m, _ in loo])
    loo_var = np.array([v for _, v in loo])

    def jk(theta):
        return float(math.sqrt((B - 1) / B * np.sum((theta - theta.mean()) ** 2)))

    fano = fano_err = reason = None
    if mean > 0 and np.all(loo_mean > 0):
        fano = var / mean
        fano_err = jk(loo_var / loo_mean)
    else:
        reason = "no detections in the data" if mean == 0 else "a jackknife subsample has no detections"
        if mean > 0:
            fano = var / mean
    return WindowStats(mean, var, fano, fano_err, jk(loo_mean), jk(loo_var),
                       int(c.sum()), N, window, reason, counts)


def window_stats(trace: EventTrace, cfg: SimConfig) -> WindowStats:
    stats = count_stats(window_counts(trace, cfg.window, cfg.window_count), cfg.window)
    stats.config = cfg
    return stats


def point_seed(seed: int, index: int) -> int:
    """Independent integer seed for sweep point ``index`` derived from ``seed``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def fano_curve_mc(ratios, mu2: float = 1.0, eta: float = 1.0, deadtime_over_tau: float = 0.0,
                  window_count: int = 10_000, intervals_per_window: float = 100.0,
                  seed: int = 0, mode: SimMode | str = SimMode.RENEWAL, n_jobs: int = 1) -> FanoCurve:
    """Monte Carlo counterpart of :func:`spsstats.analytics.fano_curve`.

    Each point uses windows of ``intervals_per_window`` mean detection
    intervals (of the renewal model) so that every point sits in the
    long-window regime with a comparable number of counts per window.
    """
    ratios = np.asarray(ratios, dtype=float)
    if np.any(ratios <= 0) or np.any(np.diff(ratios) <= 0):
        raise ValueError("ratio grid must be positive and strictly increasing")
    det = DetectorParams(eta, deadtime_over_tau / mu2)
    fano, err, durations = [], [], []
    for i, r in enumerate(ratios):
        rates = RateParams(r * mu2, mu2)
        T = intervals_per_window * renewal_moments(detection_model(rates, det)).m1
        cfg = SimConfig(rates, WindowSpec(T), window_count, det, point_seed(seed, i), mode,
                        n_jobs=n_jobs)
        st = window_stats(simulate(cfg), cfg)
        log.debug("ratio %g: fano %s +- %s", r, st.fano, st.fano_stderr)
        fano.append(np.nan if st.fano is None else st.fano)
        err.append(np.nan if st.fano_stderr is None else st.fano_stderr)
        durations.append(T)
    return FanoCurve(ratios, np.array(fano), eta, deadtime_over_tau, np.array(err),
                     meta={"mode": SimMode(mode).value, "window_durations": durations,
                           "window_count": window_count, "seed": seed})


def deadtime_mode_report(ratios=(0.1, 1.0, 10.0), deadtimes_over_tau=(0.1, 0.5, 1.0),
                         eta: float = 0.5, mu2: float = 1.0, window_count: int = 10_000,
                         intervals_per_window: float = 100.0, seed: int = 0,
                         n_jobs: int = 1) -> list[dict]:
    """Fano factors of both simulator modes against the truncated-renewal prediction."""
    rows = []
    for j, dt in enumerate(deadtimes_over_tau):
        curves = {
            mode: fano_curve_mc(ratios, mu2, eta, dt, window_count, intervals_per_window,
                                point_seed(seed, j), mode, n_jobs)
            for mode in (SimMode.RENEWAL, SimMode.PHYSICAL)
        }
        det = DetectorParams(eta, dt / mu2)
        for i, r in enumerate(ratios):
            analytic = fano_asymptotic(detection_model(RateParams(r * mu2, mu2), det))
            renewal, phys = curves[SimMode.RENEWAL], curves[SimMode.PHYSICAL]
            rows.append({
                "ratio": float(r),
                "deadtime_over_tau": float(dt),
                "fano_analytic": analytic,
                "fano_renewal": float(renewal.fano[i]),
                "fano_renewal_stderr": float(renewal.stderr[i]),
                "z_renewal": float((renewal.fano[i] - analytic) / renewal.stderr[i]),
                "fano_physical": float(phys.fano[i]),
                "fano_physical_stderr": float(phys.stderr[i]),
            })
    return rows


# trace export -------------------------------------------------------------

def write_trace(trace: EventTrace, path, header: dict | None = None, digits: int = 12) -> None:
    """One detection time per line in fixed-point decimal, '#' header lines first."""
    lines = [f"# horizon = {trace.horizon!r}", f"# detections = {len(trace.detections)}"]
    for key, value in (header or {}).items():
        lines.append(f"# {key} = {value}")
    body = "\n".join(f"{t:.{digits}f}" for t in trace.detections.tolist())
    Path(path).write_text("\n".join(lines) + "\n" + body + ("\n" if body else ""))


def read_trace(path) -> EventTrace:
    horizon = math.nan
    values = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key.strip() == "horizon":
                horizon = float(value)
        elif line.strip():
            values.append(float(line))
    return EventTrace(np.array(values), horizon)
