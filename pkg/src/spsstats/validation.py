"""Cross-route consistency checks: closed forms vs numerical inversion vs Monte Carlo."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import analytics as an
from . import inversion as inv
from . import model as md
from . import simulator as sim


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _random_rates(rng, n):
    lo, hi = math.log(1e-2), math.log(1e2)
    return [md.RateParams(*np.exp(rng.uniform(lo, hi, 2))) for _ in range(n)]


def check_ideal_minimum() -> tuple[bool, str]:
    curve = an.fano_curve(an.ratio_grid(1e-3, 1e3, 121))
    r, f = curve.minimum()
    ends = min(curve.fano[0], curve.fano[-1])
    ok = abs(r - 1.0) < 1e-12 and abs(f - 0.5) < 1e-12 and ends >= 0.998
    return ok, f"min {f:.12g} at ratio {r:.6g}; endpoints >= {ends:.6f}"


def check_rescaling_law(fano_lossy=an.fano_lossy, fano_ideal=an.fano_ideal,
                        etas=(1.0, 0.5, 0.1)) -> tuple[bool, str]:
    grid = an.ratio_grid(1e-3, 1e3, 121)
    worst = 0.0
    minima = {}
    for eta in etas:
        vals = []
        for r in grid:
            p = md.RateParams(r, 1.0)
            fl = fano_lossy(p, eta)
            worst = max(worst, abs((1 - fl) - eta * (1 - fano_ideal(p))))
            vals.append(fl)
        minima[eta] = min(vals)
    expected = all(abs(minima[e] - (1 - e / 2)) < 1e-12 for e in etas)
    ok = worst <= 1e-12 and expected
    mins = ", ".join(f"eta={e}: {m:.12g}" for e, m in minima.items())
    return ok, f"max rescaling residual {worst:.2e}; minima {mins}"


def check_deadtime_curves() -> tuple[bool, str]:
    det = lambda d: md.DetectorParams(0.5, d)
    right = an.fano_asymptotic(md.detection_model(md.RateParams(1e4, 1.0), det(0.1)))
    left = an.fano_asymptotic(md.detection_model(md.RateParams(1e-4, 1.0), det(0.1)))
    grid = an.ratio_grid(1e-3, 1e3, 121)
    half = an.fano_curve(grid, 1.0, 0.5, 0.5)
    full = an.fano_curve(grid, 1.0, 0.5, 1.0)
    r_half, _ = half.minimum()
    no_min = not any(full.fano[i] < full.fano[0] for i in full.interior_minima())
    ok = (abs(right - 1 / 1.05**2) <= 2e-3 and abs(left - 1) <= 1e-3
          and abs(r_half - 1.0) > 1e-9 and no_min)
    return ok, (f"D=0.1: right plateau {right:.5f}, left {left:.5f}; D=0.5: min at ratio "
                f"{r_half:.4g}; D=1: interior minima {len(full.interior_minima())}")


def check_dual_derivation(seed: int = 0, draws: int = 100) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in _random_rates(rng, draws):
        eta = rng.uniform(1e-3, 1.0)
        worst = max(worst,
                    abs(an.fano_asymptotic(md.IdealCycle(p)) - an.fano_ideal(p)),
                    abs(an.fano_asymptotic(md.Lossy(p, eta)) - an.fano_lossy(p, eta)))
    return worst <= 1e-10, f"max |renewal - closed form| = {worst:.2e} over {draws} draws"


def check_transform_consistency(seed: int = 0, draws: int = 10) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in _random_rates(rng, draws):
        det = md.DetectorParams(rng.uniform(0.05, 1.0), rng.uniform(0, 5 / p.mu2))
        for kind in (md.IdealCycle(p), md.Lossy(p, det.eta), md.LossyDeadtime(p, det)):
            s = rng.uniform(0, 10 * (p.mu1 + p.mu2))
            lo = kind.deadtime
            scale = an.renewal_moments(kind).m1
            num = quad(lambda t: math.exp(-s * t) * float(kind.pdf(t)), lo, lo + scale,
                       epsabs=0, epsrel=1e-12, limit=200)[0]
            num += quad(lambda t: math.exp(-s * t) * float(kind.pdf(t)), lo + scale, math.inf,
                        epsabs=0, epsrel=1e-12, limit=200)[0]
            ref = kind.laplace(s).real
            if ref == 0 and num == 0:  # both underflow for very large s*D
                continue
            worst = max(worst, abs(num - ref) / max(ref, num))
    return worst <= 1e-7, f"max relative quadrature mismatch {worst:.2e}"


def check_counting_distribution() -> tuple[bool, str]:
    p = md.RateParams(1.0, 1.0)
    kind = md.IdealCycle(p)
    w = an.WindowSpec(5.0)
    cd = inv.counting_distribution(kind, w, 40)
    mass = cd.probs.sum()
    dm = abs(cd.mean() - an.mean_finite(p, w)) / an.mean_finite(p, w)
    dv = abs(cd.variance() - an.var_finite(p, w)) / an.var_finite(p, w)
    p0 = inv.counting_distribution(kind, an.WindowSpec(1.0), 10).probs[0]
    ok = abs(mass - 1) <= 1e-6 and dm <= 1e-4 and dv <= 1e-4 and abs(p0 - 2 / math.e) <= 1e-7
    return ok, (f"mass-1 {mass - 1:.1e}, mean rel {dm:.1e}, var rel {dv:.1e}, "
                f"P_1(0)-2/e {p0 - 2 / math.e:.1e}")


def check_two_route(T: float = 10.0, grid_step: float = 0.005) -> tuple[bool, str]:
    kind = md.IdealCycle(md.RateParams(1.0, 1.0))
    probs = inv.counting_distribution(kind, an.WindowSpec(T), 40).probs
    K = [1.0] + [inv.k_n_oracle(kind, n, T, grid_step) for n in range(1, 7)]
    worst = max(abs(probs[n] - (K[n] - K[n + 1])) for n in range(6))
    return worst <= 2e-5, f"max |P_T(n) - (K_n - K_n+1)| = {worst:.2e} for n <= 5"


def _mc_point(rates, det, T, windows, seed, mode):
    cfg = sim.SimConfig(rates, an.WindowSpec(T), windows, det, seed, mode)
    return sim.window_stats(sim.simulate(cfg), cfg)


def check_mc_vs_analytic(windows: int = 10_000, seed: int = 0) -> tuple[bool, str]:
    cases = [
        (md.RateParams(1, 1), md.DetectorParams(1.0, 0.0), 100.0, "physical"),
        (md.RateParams(1, 1), md.DetectorParams(0.5, 0.0), 100.0, "physical"),
        (md.RateParams(10, 1), md.DetectorParams(0.5, 0.1), None, "renewal"),
    ]
    parts, ok = [], True
    for i, (rates, det, T, mode) in enumerate(cases):
        kind = md.detection_model(rates, det)
        T = T or 100 * an.renewal_moments(kind).m1
        st = _mc_point(rates, det, T, windows, sim.point_seed(seed, i), mode)
        target = an.fano_asymptotic(kind)
        z = (st.fano - target) / st.fano_stderr
        ok &= abs(z) <= 3
        parts.append(f"{st.fano:.4f}+-{st.fano_stderr:.4f} vs {target:.4f}")
    return ok, "; ".join(parts)


def check_finite_window(windows: int = 100_000, seed: int = 0) -> tuple[bool, str]:
    p = md.RateParams(1.0, 1.0)
    worst = 0.0
    for i, T in enumerate((0.5, 1.0, 2.0, 5.0)):
        w = an.WindowSpec(T)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = sim.SimConfig(p, w, windows, seed=sim.point_seed(seed, i), windows_per_trace=1)
        st = sim.window_stats(sim.simulate(cfg), cfg)
        worst = max(worst, abs(st.mean - an.mean_finite(p, w)) / st.mean_stderr,
                    abs(st.variance - an.var_finite(p, w)) / st.variance_stderr)
    dmean, dvar = finite_to_asymptote(p)
    ok = worst <= 3 and dmean <= 1e-6 and dvar <= 1e-6
    return ok, f"max |z| {worst:.2f}; large-T mean rel {dmean:.1e}, var rel {dvar:.1e}"


def finite_to_asymptote(p: md.RateParams, x: float = 50.0) -> tuple[float, float]:
    """Relative gaps between the finite-window moments and their long-window asymptotes
    (including the constant offsets) at ``(mu1 + mu2) T = x``."""
    w = an.WindowSpec(x / (p.mu1 + p.mu2))
    c_mean, c_var = an.finite_window_offsets(p)
    mean_inf = an.mean_asymptotic(p, w)
    var_inf = an.fano_ideal(p) * mean_inf
    m, v = an.mean_finite(p, w), an.var_finite(p, w)
    return abs(m - (mean_inf + c_mean)) / m, abs(v - (var_inf + c_var)) / v


def check_deadtime_report(windows: int = 10_000, seed: int = 0) -> tuple[bool, str]:
    rows = sim.deadtime_mode_report(window_count=windows, seed=seed)
    worst = max(abs(r["z_renewal"]) for r in rows)
    gap = max(abs(r["fano_physical"] - r["fano_renewal"]) for r in rows)
    return worst <= 3, f"{len(rows)} rows; renewal-mode max |z| {worst:.2f}; max physical-renewal gap {gap:.3f}"


def run_validation(quick: bool = False, seed: int = 0, fano_lossy=an.fano_lossy) -> list[CheckResult]:
    """Run every check; ``quick`` shrinks the Monte Carlo sample sizes."""
    windows = 2_000 if quick else 10_000
    finite = 20_000 if quick else 100_000
    checks = [
        ("ideal-minimum", check_ideal_minimum),
        ("rescaling-law", lambda: check_rescaling_law(fano_lossy)),
        ("deadtime-curves", check_deadtime_curves),
        ("dual-derivation", lambda: check_dual_derivation(seed)),
        ("transform-consistency", lambda: check_transform_consistency(seed, 4 if quick else 10)),
        ("counting-distribution", check_counting_distribution),
        ("two-route", lambda: check_two_route(grid_step=0.01 if quick else 0.005)),
        ("mc-vs-analytic", lambda: check_mc_vs_analytic(windows, seed)),
        ("finite-window", lambda: check_finite_window(finite, seed)),
        ("deadtime-report", lambda: check_deadtime_report(windows, seed)),
    ]
    results = []
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
