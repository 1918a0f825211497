"""Longitudinal vehicle model: road load, drive cycles and wheel-to-machine mapping."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MapFormatError
from .loss_model import MachinePoint

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class VehicleParams:
    """Vehicle and driveline parameters (SI; ``cr`` as a fraction)."""

    m0: float
    mp: float
    Af: float
    cd: float
    cr: float
    rw: float
    eta_t: float
    lam: float
    kappa_R: float
    gamma_fgt: float
    rho_air: float = 1.2041
    g: float = 9.81

    def __post_init__(self):
        for name in ("m0", "mp", "Af", "cd", "cr", "rw", "eta_t", "lam", "kappa_R", "gamma_fgt", "rho_air", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.eta_t <= 1 or not self.kappa_R <= 1:
            raise ValueError("eta_t and kappa_R must lie in (0, 1]")
        if not self.cr < 0.1:
            raise ValueError("cr is a fraction, expected < 0.1")
        if self.lam < 1:
            raise ValueError("rotating-mass factor lam must be >= 1")

    @property
    def mass(self) -> float:
        return self.m0 + self.mp


I3_VEHICLE = VehicleParams(
    m0=1195.0, mp=100.0, Af=2.38, cd=0.29, cr=0.0174, rw=0.350,
    eta_t=0.97, lam=1.05, kappa_R=0.55, gamma_fgt=9.665,
)


@dataclass(frozen=True)
class DriveCycle:
    t: np.ndarray
    v: np.ndarray
    name: str = ""

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("t and v must be equal-length 1-D arrays")
        if np.any(v < 0):
            raise ValueError("cycle speeds must be non-negative")
        if t.size > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError("cycle time must be strictly increasing")
            if np.ptp(dt) > 1e-9:
                raise ValueError("cycle time step must be uniform")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 1.0

    @property
    def distance(self) -> float:
        """Distance in m by trapezoidal integration."""
        if self.t.size < 2:
            return 0.0
        return float(np.sum(0.5 * (self.v[1:] + self.v[:-1]) * np.diff(self.t)))

    @classmethod
    def constant(cls, v, duration, dt=1.0, name="constant"):
        t = np.arange(0.0, duration + 0.5 * dt, dt)
        return cls(t, np.full(t.shape, float(v)), name)


@dataclass(frozen=True)
class WheelDemand:
    """Wheel speed and the torque the machine side must handle.

    ``tau_t`` is signed (negative while braking) and already excludes the
    braking share taken by the friction brakes, which is kept in
    ``tau_friction``.
    """

    omega_t: np.ndarray | float
    tau_t: np.ndarray | float
    tau_friction: np.ndarray | float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.omega_t) < 0):
            raise ValueError("wheel speed must be non-negative")


def load_cycle(path, name=None) -> DriveCycle:
    """Read a ``t_s,v_kmh`` CSV (``#`` comments allowed)."""
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise MapFormatError(f"{path}: empty cycle file")
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not {"t_s", "v_kmh"} <= {f.strip() for f in reader.fieldnames}:
        raise MapFormatError(f"{path}: expected columns t_s,v_kmh")
    t, v = [], []
    for rec in reader:
        rec = {k.strip(): val for k, val in rec.items()}
        try:
            t.append(float(rec["t_s"]))
            v.append(float(rec["v_kmh"]) * KMH)
        except (TypeError, ValueError) as exc:
            raise MapFormatError(f"{path}: bad record {rec!r}") from exc
    try:
        return DriveCycle(np.array(t), np.array(v), name or Path(path).stem)
    except ValueError as exc:
        raise MapFormatError(f"{path}: {exc}") from exc


def road_load_force(p: VehicleParams, v):
    v = np.asarray(v, dtype=float)
    return p.mass * p.g * p.cr + 0.5 * p.rho_air * p.cd * p.Af * v * v


def road_load_stationary(p: VehicleParams, v) -> WheelDemand:
    """Wheel demand for steady driving at speed ``v`` (m/s) on a flat road."""
    if np.any(np.asarray(v) < 0):
        raise ValueError("speed must be non-negative")
    F = road_load_force(p, v)
    tau = F * p.rw
    omega = np.asarray(v, dtype=float) / p.rw
    if np.ndim(v) == 0:
        return WheelDemand(float(omega), float(tau))
    return WheelDemand(omega, tau)


def cycle_to_wheel(p: VehicleParams, cyc: DriveCycle) -> WheelDemand:
    """Per-sample wheel demand, with backward-difference acceleration.

    Braking torque is split: ``kappa_R`` of it goes to the machine, the rest
    to the friction brakes.
    """
    a = np.zeros_like(cyc.v)
    a[1:] = np.diff(cyc.v) / np.diff(cyc.t)
    F = road_load_force(p, cyc.v) + p.lam * p.mass * a
    tau = F * p.rw
    braking = tau < 0
    tau_t = np.where(braking, p.kappa_R * tau, tau)
    tau_friction = np.where(braking, (1.0 - p.kappa_R) * tau, 0.0)
    return WheelDemand(cyc.v / p.rw, tau_t, tau_friction)


def wheel_to_machine(d: WheelDemand, gamma, eta_t: float) -> MachinePoint:
    """Machine operating point behind a transmission of ratio ``gamma``.

    Transmission losses act against the power flow: the machine supplies
    ``tau_t/(gamma*eta_t)`` when motoring and receives ``tau_t*eta_t/gamma``
    when regenerating. Envelope checks are left to ``MachineLimits.contains``.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive")
    tau_t = np.asarray(d.tau_t, dtype=float)
    omega_m = np.asarray(d.omega_t, dtype=float) * gamma
    tau_m = np.where(tau_t >= 0, tau_t / (gamma * eta_t), tau_t * eta_t / gamma)
    if omega_m.ndim == 0 and tau_m.ndim == 0:
        return MachinePoint(float(tau_m), float(omega_m))
    return MachinePoint(*np.broadcast_arrays(tau_m, omega_m))
