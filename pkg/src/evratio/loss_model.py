"""Polynomial loss model of an electric machine and its optimal operation line.

Losses are ``P_loss = sum c_mn |tau|^m omega^n`` with ``m, n <= 2``. Speeds are
rad/s, torques Nm, powers W throughout; rpm only appears at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import (
    NegativeBetaError,
    NoInteriorMaximumError,
    UndefinedOperatingPointError,
)

RPM_TO_RADS = math.pi / 30.0
RADS_TO_RPM = 30.0 / math.pi

# modified two-degree model: the only coefficients allowed to be nonzero
ACTIVE_SET = frozenset({"c00", "c01", "c02", "c11", "c20"})


def rpm_to_rads(n):
    return np.asarray(n, dtype=float) * RPM_TO_RADS if np.ndim(n) else float(n) * RPM_TO_RADS


def rads_to_rpm(w):
    return np.asarray(w, dtype=float) * RADS_TO_RPM if np.ndim(w) else float(w) * RADS_TO_RPM


@dataclass(frozen=True)
class LossCoefficients:
    """Coefficients ``c_mn`` of the loss polynomial (m: torque power, n: speed power).

    Construction enforces non-negativity, ``c20 > 0`` and the sparsity mask
    ``ACTIVE_SET``.
    """

    c00: float = 0.0
    c01: float = 0.0
    c02: float = 0.0
    c10: float = 0.0
    c11: float = 0.0
    c12: float = 0.0
    c20: float = 0.0
    c21: float = 0.0
    c22: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            object.__setattr__(self, f.name, value)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"{f.name} must be finite and non-negative, got {value}")
            if f.name not in ACTIVE_SET and value != 0.0:
                raise ValueError(f"{f.name} is outside the active coefficient set {sorted(ACTIVE_SET)}")
        if self.c20 <= 0.0:
            raise ValueError("c20 must be strictly positive")

    @property
    def mask(self) -> frozenset:
        return ACTIVE_SET

    def matrix(self) -> np.ndarray:
        """3x3 array ``C[m, n] = c_mn``."""
        return np.array(
            [
                [self.c00, self.c01, self.c02],
                [self.c10, self.c11, self.c12],
                [self.c20, self.c21, self.c22],
            ]
        )

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in sorted(ACTIVE_SET)}


@dataclass(frozen=True)
class OolCoefficients:
    """Coefficients of ``beta(omega) = d00 + d01*omega + d02*omega**2``.

    ``sqrt(beta)`` is the efficiency-optimal torque at each speed.
    """

    d00: float
    d01: float
    d02: float

    def __post_init__(self):
        for name in ("d00", "d01", "d02"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if not self.d01**2 - 4.0 * self.d00 * self.d02 > 0.0:
            raise ValueError("real-roots condition d01**2 - 4*d00*d02 > 0 violated")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.d00, self.d01, self.d02)

    def beta(self, omega):
        return self.d00 + self.d01 * omega + self.d02 * omega * omega


@dataclass(frozen=True)
class MachineLimits:
    tau_cont_max: float
    tau_peak_max: float
    omega_rated: float
    omega_max: float
    p_cont_max: float
    p_peak_max: float

    def __post_init__(self):
        if not 0 < self.tau_cont_max <= self.tau_peak_max:
            raise ValueError("need 0 < tau_cont_max <= tau_peak_max")
        if not 0 < self.omega_rated <= self.omega_max:
            raise ValueError("need 0 < omega_rated <= omega_max")
        if not 0 < self.p_cont_max <= self.p_peak_max:
            raise ValueError("need 0 < p_cont_max <= p_peak_max")

    def torque_envelope(self, omega, peak=True):
        """Maximum torque magnitude at ``omega``: constant up to the rated
        speed, power-limited above it."""
        tau_max = self.tau_peak_max if peak else self.tau_cont_max
        p_max = self.p_peak_max if peak else self.p_cont_max
        omega = np.asarray(omega, dtype=float)
        with np.errstate(divide="ignore"):
            limited = np.minimum(tau_max, p_max / omega)
        env = np.where(omega > self.omega_rated, limited, tau_max)
        return env if env.ndim else float(env)

    def contains(self, p: "MachinePoint", tol=1e-9):
        """Boolean (array) that is true where ``p`` lies inside the peak envelope."""
        omega = np.asarray(p.omega, dtype=float)
        tau = np.abs(np.asarray(p.tau, dtype=float))
        ok = (omega <= self.omega_max * (1 + tol)) & (tau <= self.torque_envelope(omega) * (1 + tol))
        return ok if ok.ndim else bool(ok)


@dataclass(frozen=True)
class MachinePoint:
    """Shaft operating point; fields may be scalars or equal-shape arrays.

    Negative torque means regeneration.
    """

    tau: float | np.ndarray
    omega: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.omega) < 0):
            raise ValueError("omega must be non-negative")


def alpha_terms(c: LossCoefficients, omega):
    """Speed-dependent coefficients of the loss quadratic in torque.

    Returns ``(alpha1, alpha2, alpha3)`` such that
    ``P_loss = alpha1 + alpha2*tau + alpha3*tau**2``.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("omega must be non-negative")
    C = c.matrix()
    alpha1 = C[0, 0] + C[0, 1] * w + C[0, 2] * w * w
    alpha2 = C[1, 0] + C[1, 1] * w + C[1, 2] * w * w
    alpha3 = C[2, 0] + C[2, 1] * w + C[2, 2] * w * w
    if w.ndim == 0:
        return float(alpha1), float(alpha2), float(alpha3)
    return alpha1, alpha2, alpha3


def loss_power(c: LossCoefficients, p: MachinePoint):
    """Machine power loss in W; the map is symmetric in torque sign."""
    tau = np.abs(np.asarray(p.tau, dtype=float))
    alpha1, alpha2, alpha3 = alpha_terms(c, p.omega)
    return alpha1 + alpha2 * tau + alpha3 * tau * tau


def efficiency(c: LossCoefficients, p: MachinePoint):
    """Motoring efficiency ``tau*omega / (tau*omega + P_loss)``.

    Raises UndefinedOperatingPointError at zero mechanical power.
    """
    tau = np.asarray(p.tau, dtype=float)
    omega = np.asarray(p.omega, dtype=float)
    power = tau * omega
    if np.any(power == 0):
        raise UndefinedOperatingPointError("efficiency is undefined at zero mechanical power")
    if np.any(power < 0):
        raise ValueError("efficiency() covers the motoring quadrant only")
    eta = power / (power + loss_power(c, p))
    return eta if eta.ndim else float(eta)


def optimal_torque(d: OolCoefficients, omega):
    """Torque maximizing efficiency at speed ``omega``: ``sqrt(beta(omega))``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("omega must be non-negative")
    beta = d.beta(w)
    if np.any(beta < 0):
        raise NegativeBetaError("beta(omega) < 0; no real optimal torque")
    tau = np.sqrt(beta)
    return tau if tau.ndim else float(tau)


def d_from_c(c: LossCoefficients) -> OolCoefficients:
    return OolCoefficients(c.c00 / c.c20, c.c01 / c.c20, c.c02 / c.c20)


def c_from_d(d: OolCoefficients, c20: float, c11: float) -> LossCoefficients:
    if not c20 > 0:
        raise ValueError("c20 must be strictly positive")
    if c11 < 0:
        raise ValueError("c11 must be non-negative")
    return LossCoefficients(c00=d.d00 * c20, c01=d.d01 * c20, c02=d.d02 * c20, c11=c11, c20=c20)


def ool_efficiency(c: LossCoefficients, omega):
    """Efficiency along the optimal operation line as a function of speed."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise UndefinedOperatingPointError("optimal-line efficiency needs omega > 0")
    _, alpha2, alpha3 = alpha_terms(c, w)
    tau_star = optimal_torque(d_from_c(c), w)
    eta = w / (w + 2.0 * alpha3 * tau_star + alpha2)
    return eta if eta.ndim else float(eta)


def ool_speed_for_efficiency(c: LossCoefficients, eta_star: float) -> float:
    """Closed-form speed on the optimal operation line given its efficiency.

    The full radicand is evaluated even when ``d00 == 0`` collapses it to a
    perfect square; the positive square root is taken.
    """
    d = d_from_c(c)
    c11, c20 = c.c11, c.c20
    d00, d01, d02 = d.as_tuple()
    e = float(eta_star)
    radicand = (
        d00 * c11**2 * e**2
        + 2 * d00 * c11 * e**2
        - 2 * d00 * c11 * e
        + c20**2 * d01**2 * e**2
        - 4 * d00 * d02 * c20**2 * e**2
        + d00 * e**2
        - 2 * d00 * e
        + d00
    )
    denom = c11**2 * e**2 + 2 * c11 * e**2 - 2 * c11 * e - 4 * d02 * c20**2 * e**2 + e**2 - 2 * e + 1
    if radicand < 0:
        raise ValueError(f"negative radicand {radicand!r} at eta={e}")
    if denom <= 0:
        raise ValueError(f"efficiency {e} is not attained on the optimal operation line")
    return 2 * c20 * e * (math.sqrt(radicand) + c20 * d01 * e) / denom


def _golden_max(f, lo, hi, tol=1e-10, max_iter=500):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(b)):
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
    return 0.5 * (a + b)


def peak_efficiency_point(c: LossCoefficients, omega_max: float, omega_min: float = 1e-6):
    """Speed and efficiency of the maximum of the optimal-line efficiency.

    Maximizes ``ool_efficiency`` on ``[omega_min, omega_max]`` by golden-section
    search and checks the result against the closed-form line speed. Raises
    NoInteriorMaximumError when the maximum sits on the search boundary.
    """
    if not 0 < omega_min < omega_max:
        raise ValueError("need 0 < omega_min < omega_max")
    f = lambda w: ool_efficiency(c, w)  # noqa: E731
    w_star = _golden_max(f, omega_min, omega_max)
    span = omega_max - omega_min
    # boundary maximum: search collapsed onto an end point, or still rising there
    at_edge = w_star >= omega_max - 1e-6 * span or w_star <= omega_min + 1e-6 * span
    h = 1e-4 * span
    rising = f(omega_max) > f(omega_max - h)
    if at_edge or (rising and f(omega_max) >= f(w_star)):
        raise NoInteriorMaximumError(
            f"optimal-line efficiency is maximal at the search boundary "
            f"(omega={w_star:.6g} rad/s, eta={f(w_star):.6g})"
        )
    eta_star = f(w_star)
    w_closed = ool_speed_for_efficiency(c, eta_star)
    if abs(w_closed - w_star) > 1e-3 * w_star:
        raise NoInteriorMaximumError(
            f"closed-form line speed {w_closed:.6g} disagrees with maximizer {w_star:.6g}"
        )
    return w_star, eta_star
