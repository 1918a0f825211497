"""Efficiency-optimal transmission ratio.

For a wheel demand ``(tau_t, omega_t)`` the machine runs on its optimal
operation line when ``(tau_t/eta_t)**2 = beta(omega_t*gamma) * gamma**2``,
a quartic in ``gamma``. It is solved here in closed form (nested radicals in
extended precision) and, independently, by bracketing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.optimize import brentq

from .errors import (
    ClosedFormDegenerateError,
    EnvelopeViolationError,
    NoPositiveRootError,
)
from .loss_model import (
    LossCoefficients,
    MachineLimits,
    OolCoefficients,
    efficiency,
)
from .vehicle import KMH, VehicleParams, WheelDemand, road_load_stationary, wheel_to_machine

RESIDUAL_TOL = 1e-8
IMAG_TOL = 1e-9


@dataclass(frozen=True)
class RatioQuery:
    """Wheel demand plus driveline data for one ratio computation.

    ``eta_t`` is the factor dividing the wheel torque on the way to the
    machine; pass ``1/eta_t`` for regenerative demands.
    """

    tau_t: float
    omega_t: float
    eta_t: float
    d: OolCoefficients

    def __post_init__(self):
        if not self.tau_t > 0 or not self.omega_t > 0:
            raise ValueError("ratio queries need tau_t > 0 and omega_t > 0")
        if not self.eta_t > 0:
            raise ValueError("eta_t must be positive")

    @property
    def kappa(self) -> float:
        return (self.tau_t / self.eta_t) ** 2

    def residual(self, gamma) -> float:
        """Relative residual of the ratio quartic at ``gamma``."""
        d, w, g = self.d, self.omega_t, gamma
        k = self.kappa
        return abs(k - d.d00 * g**2 - d.d01 * w * g**3 - d.d02 * w**2 * g**4) / k


@dataclass(frozen=True)
class RatioBounds:
    gamma_min: float
    gamma_max: float
    v_at_min: float
    v_at_max: float


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    threshold: float
    fraction_below: float

    def rows(self):
        return [(float(a), float(b), int(n)) for a, b, n in zip(self.edges[:-1], self.edges[1:], self.counts)]


@dataclass
class SweepResult:
    gamma_grid: np.ndarray
    eta_avg_fgt: np.ndarray
    feasible: np.ndarray
    eta_avg_cvt: float
    gamma_fgt_opt: float
    eta_fgt_opt: float
    cvt_mean_ratio: float
    cvt_report: object = field(default=None, repr=False)
    cvt_optimal_ratios: np.ndarray = field(default=None, repr=False)


def _closed_form_mp(q: RatioQuery, dps: int):
    with mpmath.workdps(dps):
        mpf = mpmath.mpf
        d00, d01, d02 = (mpf(x) for x in q.d.as_tuple())
        w = mpf(q.omega_t)
        k = (mpf(q.tau_t) / mpf(q.eta_t)) ** 2
        third, sixth = mpf(1) / 3, mpf(1) / 6
        s5 = d00 / (d02 * w**2) - 3 * d01**2 / (8 * d02**2 * w**2)
        s6 = d01**3 / (8 * d02**3 * w**3) - d00 * d01 / (2 * d02**2 * w**3)
        s4 = k / (d02 * w**2) + 3 * d01**4 / (256 * d02**4 * w**4) - d00 * d01**2 / (16 * d02**3 * w**4)
        s3 = mpmath.sqrt(mpmath.mpc(
            256 * s4**3 + 128 * s5**2 * s4**2 + 27 * s6**4
            + 4 * s5**3 * s6**2 + 16 * s5**4 * s4 + 144 * s5 * s6**2 * s4
        ))
        s2 = s6**2 / 2 + 4 * s5 * s4 / 3 + mpmath.sqrt(3) * s3 / 18 + s5**3 / 27
        s1 = (
            9 * s2 ** (2 * third) - 6 * s5 * s2**third + s5**2 - 12 * k / (d02 * w**2)
            - 9 * d01**4 / (64 * d02**4 * w**4) + 3 * d00 * d01**2 / (4 * d02**3 * w**4)
        )
        if s1 == 0 or s2 == 0:
            raise ClosedFormDegenerateError("vanishing substitution term in closed form")
        r1 = mpmath.sqrt(s1)
        inner = mpmath.sqrt(27 * s6**2 + 72 * s5 * s4 + 3 * mpmath.sqrt(3) * s3 + 2 * s5**3)
        num = mpmath.sqrt(
            12 * s4 * r1 - s5**2 * r1 - 9 * s2 ** (2 * third) * r1
            + 3 * mpmath.sqrt(6) * s6 * inner - 12 * s5 * s2**third * r1
        )
        gamma = num / (6 * s2**sixth * s1 ** (mpf(1) / 4)) - d01 / (4 * d02 * w) - r1 / (6 * s2**sixth)
        return complex(gamma)


def optimal_ratio_closed_form(q: RatioQuery, dps: int = 50) -> float:
    """Closed-form optimal ratio, evaluated with principal-branch radicals.

    Double precision is not enough: the positive root emerges from the
    cancellation of terms of order ``d01/(d02*omega_t)``, so the radicals are
    evaluated with ``dps`` significant digits (retried once at twice that).
    Raises ClosedFormDegenerateError when the result fails validation.
    """
    if not q.d.d02 > 0:
        raise ClosedFormDegenerateError("closed form needs d02 > 0")
    last = None
    for digits in (dps, 2 * dps):
        try:
            g = _closed_form_mp(q, digits)
        except (ZeroDivisionError, ValueError) as exc:
            raise ClosedFormDegenerateError(str(exc)) from exc
        last = g
        if abs(g.imag) <= IMAG_TOL * max(abs(g.real), 1.0) and g.real > 0:
            if q.residual(g.real) < RESIDUAL_TOL:
                return g.real
    raise ClosedFormDegenerateError(f"closed form gave {last!r}; residual check failed")


def optimal_ratio_numeric(q: RatioQuery) -> float:
    """Positive root of the ratio quartic by bracketing and Brent's method.

    With non-negative coefficients the quartic's left side falls strictly
    for ``gamma > 0``, so the positive root is unique.
    """
    d, w, k = q.d, q.omega_t, q.kappa

    def f(g):
        return k - d.d00 * g * g - d.d01 * w * g**3 - d.d02 * w * w * g**4

    if d.d02 > 0:
        hi = 2.0 * (k / (d.d02 * w * w)) ** 0.25 + d.d01 / (d.d02 * w)
    elif d.d01 > 0:
        hi = 2.0 * (k / (d.d01 * w)) ** (1.0 / 3.0)
    elif d.d00 > 0:
        hi = 2.0 * math.sqrt(k / d.d00)
    else:
        raise NoPositiveRootError("all optimal-line coefficients are zero")
    for _ in range(200):
        if f(hi) < 0:
            break
        hi *= 2.0
    else:
        raise NoPositiveRootError("failed to bracket the positive root")
    g = brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    # one Newton step tightens the last bits
    df = -2 * d.d00 * g - 3 * d.d01 * w * g * g - 4 * d.d02 * w * w * g**3
    if df != 0:
        g_new = g - f(g) / df
        if g_new > 0 and abs(f(g_new)) <= abs(f(g)):
            g = g_new
    if q.residual(g) > 1e-10:
        raise NoPositiveRootError(f"root residual {q.residual(g):.3g} above tolerance")
    return float(g)


def optimal_ratio(q: RatioQuery, method: str = "closed_form") -> float:
    """Optimal ratio; the closed form falls back to the numeric root on failure."""
    if method == "numeric":
        return optimal_ratio_numeric(q)
    if method != "closed_form":
        raise ValueError(f"unknown method {method!r}")
    try:
        return optimal_ratio_closed_form(q)
    except ClosedFormDegenerateError:
        return optimal_ratio_numeric(q)


def verify_ratio_optimality(q: RatioQuery, gamma: float, c: LossCoefficients,
                            limits: MachineLimits | None = None, delta: float = 0.01) -> bool:
    """True when ``gamma`` beats ``gamma*(1 +/- delta)`` on machine efficiency.

    With ``limits`` given, a probe outside the machine envelope raises
    EnvelopeViolationError.
    """
    demand = WheelDemand(q.omega_t, q.tau_t)
    probes = (gamma, gamma * (1 - delta), gamma * (1 + delta))
    etas = []
    for g in probes:
        p = wheel_to_machine(demand, g, q.eta_t)
        if limits is not None and not limits.contains(p):
            raise EnvelopeViolationError(f"ratio {g:.6g} puts the machine outside its envelope")
        etas.append(efficiency(c, p))
    return etas[0] >= etas[1] and etas[0] >= etas[2]


def stationary_ratios(d: OolCoefficients, vehicle: VehicleParams, speeds, method="closed_form"):
    """Optimal ratio for steady driving at each speed (m/s, all > 0)."""
    speeds = np.asarray(speeds, dtype=float)
    out = np.empty_like(speeds)
    for i, v in enumerate(speeds):
        dem = road_load_stationary(vehicle, v)
        out[i] = optimal_ratio(RatioQuery(dem.tau_t, dem.omega_t, vehicle.eta_t, d), method)
    return out


def cvt_bounds(d: OolCoefficients, vehicle: VehicleParams, v_range_kmh=(0.0, 155.0),
               step_kmh: float = 1.0, method="closed_form") -> RatioBounds:
    """Smallest and largest stationary optimal ratio over a 1 km/h speed grid.

    Standstill is skipped (zero power).
    """
    lo, hi = v_range_kmh
    if not 0 <= lo < hi:
        raise ValueError("need 0 <= v_min < v_max")
    v_kmh = np.arange(lo, hi + 0.5 * step_kmh, step_kmh)
    v_kmh = v_kmh[(v_kmh > 0) & (v_kmh <= hi + 1e-9)]
    g = stationary_ratios(d, vehicle, v_kmh * KMH, method)
    i_min, i_max = int(np.argmin(g)), int(np.argmax(g))
    return RatioBounds(float(g[i_min]), float(g[i_max]), float(v_kmh[i_min] * KMH), float(v_kmh[i_max] * KMH))


@dataclass
class CvtSchedule:
    gamma: np.ndarray          # applied ratio per sample
    gamma_opt: np.ndarray      # unclamped optimum, NaN where idle
    active: np.ndarray
    clamped: np.ndarray
    infeasible: np.ndarray


def cvt_schedule(d: OolCoefficients, vehicle: VehicleParams, demand: WheelDemand,
                 limits: MachineLimits, gamma_range=None, method="closed_form",
                 hold: float | None = None) -> CvtSchedule:
    """Per-sample CVT ratio: the optimum, clamped to the machine envelope.

    Braking samples use the same optimal-line rule on the regenerative torque.
    Idle samples keep the previous ratio (``hold`` initially, default the
    vehicle's fixed ratio).
    """
    omega_t = np.asarray(demand.omega_t, dtype=float)
    tau_t = np.asarray(demand.tau_t, dtype=float)
    n = omega_t.size
    gamma = np.empty(n)
    gamma_opt = np.full(n, np.nan)
    active = (omega_t > 0) & (tau_t != 0)
    clamped = np.zeros(n, dtype=bool)
    infeasible = np.zeros(n, dtype=bool)
    current = vehicle.gamma_fgt if hold is None else hold
    eta = vehicle.eta_t
    for i in range(n):
        if not active[i]:
            gamma[i] = current
            continue
        motoring = tau_t[i] > 0
        q = RatioQuery(abs(tau_t[i]), omega_t[i], eta if motoring else 1.0 / eta, d)
        g = optimal_ratio(q, method)
        gamma_opt[i] = g
        # ratio window from peak torque and top speed
        torque_at_machine = abs(tau_t[i]) / eta if motoring else abs(tau_t[i]) * eta
        lo = torque_at_machine / limits.tau_peak_max
        hi = limits.omega_max / omega_t[i]
        if gamma_range is not None:
            lo, hi = max(lo, gamma_range[0]), min(hi, gamma_range[1])
        if lo > hi:
            infeasible[i] = True
            g_app = hi
        else:
            g_app = min(max(g, lo), hi)
        clamped[i] = g_app != g
        p = wheel_to_machine(WheelDemand(omega_t[i], tau_t[i]), g_app, eta)
        if not limits.contains(p):
            infeasible[i] = True
        gamma[i] = current = g_app
    return CvtSchedule(gamma, gamma_opt, active, clamped, infeasible)


def fgt_sweep(c: LossCoefficients, limits: MachineLimits, vehicle: VehicleParams, cyc,
              gamma_grid=None, weighting: str = "energy", method="closed_form",
              gamma_range=None) -> SweepResult:
    """Average machine efficiency over a cycle for each fixed ratio, plus CVT.

    Ratios that push any sample outside the machine envelope are masked.
    """
    from .cycle_analysis import average_efficiency

    if gamma_grid is None:
        gamma_grid = np.round(np.arange(2.0, 12.0 + 1e-9, 0.05), 10)
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    if gamma_grid.size == 0:
        raise ValueError("empty ratio grid")
    eta = np.full(gamma_grid.shape, np.nan)
    feasible = np.zeros(gamma_grid.shape, dtype=bool)
    for i, g in enumerate(gamma_grid):
        rep = average_efficiency(c, limits, vehicle, cyc, float(g), weighting=weighting)
        feasible[i] = rep.envelope_violations == 0
        if feasible[i]:
            eta[i] = rep.eta_avg_combined
    if not feasible.any():
        raise ValueError("every ratio in the grid violates the machine envelope")
    k = int(np.nanargmax(eta))
    cvt = average_efficiency(c, limits, vehicle, cyc, "cvt", weighting=weighting,
                             method=method, gamma_range=gamma_range)
    return SweepResult(
        gamma_grid=gamma_grid,
        eta_avg_fgt=eta,
        feasible=feasible,
        eta_avg_cvt=cvt.eta_avg_combined,
        gamma_fgt_opt=float(gamma_grid[k]),
        eta_fgt_opt=float(eta[k]),
        cvt_mean_ratio=cvt.mean_ratio,
        cvt_report=cvt,
        cvt_optimal_ratios=cvt.optimal_ratios,
    )


def ratio_histogram(ratios, bin_width: float = 0.5, threshold: float = 6.0) -> Histogram:
    """Histogram of per-sample optimal ratios with the share below ``threshold``."""
    r = np.asarray(ratios, dtype=float)
    r = r[np.isfinite(r)]
    if r.size == 0:
        raise ValueError("no ratios to bin")
    start = math.floor(r.min() / bin_width) * bin_width
    stop = (math.floor(r.max() / bin_width) + 1) * bin_width
    n_bins = max(1, int(round((stop - start) / bin_width)))
    edges = start + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(r, bins=edges)
    return Histogram(edges, counts, threshold, float(np.mean(r < threshold)))
