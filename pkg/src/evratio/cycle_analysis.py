"""Cycle-level machine efficiency and energy for fixed-ratio and CVT operation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ZeroEnergyError
from .loss_model import LossCoefficients, MachineLimits, MachinePoint, d_from_c, loss_power
from .ratio_opt import cvt_schedule
from .vehicle import DriveCycle, VehicleParams, cycle_to_wheel, wheel_to_machine

J_PER_KWH = 3.6e6
TRACE_HEADER = ("t", "v", "omega_t", "tau_t", "gamma", "omega_m", "tau_m", "eta_m", "p_ac")


@dataclass
class SampleFlows:
    """Per-sample machine quantities for one cycle run.

    ``p_ac`` is positive when the machine draws electrical power and negative
    when it delivers regenerated power. Braking samples whose losses exceed
    the mechanical input are not regenerated (``skipped``).
    """

    gamma: np.ndarray
    point: MachinePoint
    p_mech: np.ndarray
    p_loss: np.ndarray
    p_ac: np.ndarray
    eta: np.ndarray
    motoring: np.ndarray
    regen: np.ndarray
    skipped: np.ndarray


@dataclass
class CycleReport:
    policy: str
    weighting: str
    eta_avg_motoring: float
    eta_avg_combined: float
    energy_ac_kwh: float
    energy_mech_kwh: float
    energy_loss_kwh: float
    energy_regen_kwh: float
    energy_per_100km: float
    distance_km: float
    clamp_events: int
    envelope_violations: int
    samples_used: int
    mean_ratio: float
    optimal_ratios: np.ndarray = field(default=None, repr=False)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("optimal_ratios")
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def sample_flows(c: LossCoefficients, demand, gamma, eta_t: float) -> SampleFlows:
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), np.shape(demand.omega_t)).copy()
    p = wheel_to_machine(demand, gamma, eta_t)
    tau = np.asarray(p.tau, dtype=float)
    omega = np.asarray(p.omega, dtype=float)
    p_mech = np.abs(tau) * omega
    p_loss = np.asarray(loss_power(c, p), dtype=float)
    moving = (omega > 0) & (tau != 0)
    motoring = moving & (tau > 0)
    braking = moving & (tau < 0)
    regen = braking & (p_mech > p_loss)
    skipped = braking & ~regen
    p_ac = np.zeros_like(p_mech)
    p_ac[motoring] = p_mech[motoring] + p_loss[motoring]
    p_ac[regen] = -(p_mech[regen] - p_loss[regen])
    eta = np.full_like(p_mech, np.nan)
    eta[motoring] = p_mech[motoring] / p_ac[motoring]
    eta[regen] = -p_ac[regen] / p_mech[regen]
    return SampleFlows(gamma, p, p_mech, p_loss, p_ac, eta, motoring, regen, skipped)


def _run(c, limits, vehicle, cyc, policy, method="closed_form", gamma_range=None):
    demand = cycle_to_wheel(vehicle, cyc)
    if isinstance(policy, str):
        if policy != "cvt":
            raise ValueError(f"unknown policy {policy!r}")
        sched = cvt_schedule(d_from_c(c), vehicle, demand, limits, gamma_range, method)
        flows = sample_flows(c, demand, sched.gamma, vehicle.eta_t)
        clamps = int(np.count_nonzero(sched.clamped & sched.active))
        optimal = sched.gamma_opt
    else:
        gamma = float(policy)
        if not gamma > 0:
            raise ValueError("fixed ratio must be positive")
        flows = sample_flows(c, demand, gamma, vehicle.eta_t)
        clamps = 0
        optimal = None
    used = flows.motoring | flows.regen
    violations = int(np.count_nonzero(used & ~np.asarray(limits.contains(flows.point))))
    return demand, flows, clamps, violations, optimal


def average_efficiency(c: LossCoefficients, limits: MachineLimits, vehicle: VehicleParams,
                       cyc: DriveCycle, policy, weighting: str = "energy",
                       method: str = "closed_form", gamma_range=None) -> CycleReport:
    """Average machine efficiency over a drive cycle.

    ``policy`` is a fixed ratio or ``"cvt"``. With ``weighting="time"`` the
    per-sample efficiencies of motoring and regenerating samples are averaged;
    with ``"energy"`` the averages are ratios of integrated useful output to
    integrated input. Idle samples never count.
    """
    if weighting not in ("time", "energy"):
        raise ValueError("weighting must be 'time' or 'energy'")
    demand, f, clamps, violations, optimal = _run(c, limits, vehicle, cyc, policy, method, gamma_range)
    dt = cyc.dt
    mot, reg = f.motoring, f.regen
    if not mot.any():
        raise ZeroEnergyError("cycle has no traction samples")
    used = mot | reg
    e_mech = np.sum(f.p_mech[mot]) * dt
    e_ac = np.sum(f.p_ac[mot]) * dt
    e_loss = np.sum(f.p_loss[mot]) * dt
    e_regen = -np.sum(f.p_ac[reg]) * dt
    e_brake_in = np.sum(f.p_mech[reg]) * dt
    if weighting == "time":
        eta_mot = float(np.mean(f.eta[mot]))
        eta_comb = float(np.mean(f.eta[used]))
    else:
        eta_mot = float(e_mech / e_ac)
        eta_comb = float((e_mech + e_regen) / (e_ac + e_brake_in))
    dist_km = cyc.distance / 1e3
    per_100 = (e_ac - e_regen) / J_PER_KWH / dist_km * 100.0 if dist_km > 0 else float("nan")
    return CycleReport(
        policy="cvt" if isinstance(policy, str) else f"fixed:{float(policy):g}",
        weighting=weighting,
        eta_avg_motoring=eta_mot,
        eta_avg_combined=eta_comb,
        energy_ac_kwh=float(e_ac / J_PER_KWH),
        energy_mech_kwh=float(e_mech / J_PER_KWH),
        energy_loss_kwh=float(e_loss / J_PER_KWH),
        energy_regen_kwh=float(e_regen / J_PER_KWH),
        energy_per_100km=float(per_100),
        distance_km=float(dist_km),
        clamp_events=clamps,
        envelope_violations=violations,
        samples_used=int(np.count_nonzero(used)),
        mean_ratio=float(np.mean(f.gamma[used])),
        optimal_ratios=optimal,
    )


def energy_usage(c: LossCoefficients, limits: MachineLimits, vehicle: VehicleParams,
                 cyc: DriveCycle, policy) -> tuple[float, float]:
    """Net machine AC energy per distance: ``(kWh/100km, distance_km)``.

    Regenerated energy is subtracted.
    """
    dist_km = cyc.distance / 1e3
    if not dist_km > 0:
        raise ZeroEnergyError("cycle covers no distance")
    _, f, _, _, _ = _run(c, limits, vehicle, cyc, policy)
    net = np.sum(f.p_ac) * cyc.dt / J_PER_KWH
    return float(net / dist_km * 100.0), float(dist_km)


def compare(fgt: CycleReport, cvt: CycleReport, margin: float = 0.0) -> dict:
    """Field-wise ``cvt - fgt`` deltas and whether CVT wins by ``margin``."""
    a, b = fgt.as_dict(), cvt.as_dict()
    deltas = {
        k: b[k] - a[k]
        for k in a
        if isinstance(a[k], (int, float)) and not isinstance(a[k], bool)
    }
    gain = deltas["eta_avg_combined"]
    return {
        "fgt": a["policy"],
        "cvt": b["policy"],
        "deltas": deltas,
        "margin": margin,
        "cvt_beats_margin": bool(gain >= margin),
    }


def cycle_trace(c: LossCoefficients, limits: MachineLimits, vehicle: VehicleParams,
                cyc: DriveCycle, policy, method: str = "closed_form", gamma_range=None) -> str:
    """Per-sample CSV trace; efficiency is empty on idle and skipped samples."""
    demand, f, *_ = _run(c, limits, vehicle, cyc, policy, method, gamma_range)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    tau_m = np.asarray(f.point.tau)
    omega_m = np.asarray(f.point.omega)
    for i in range(cyc.t.size):
        eta = "" if np.isnan(f.eta[i]) else repr(float(f.eta[i]))
        w.writerow((
            repr(float(cyc.t[i])), repr(float(cyc.v[i])), repr(float(demand.omega_t[i])),
            repr(float(demand.tau_t[i])), repr(float(f.gamma[i])), repr(float(omega_m[i])),
            repr(float(tau_m[i])), eta, repr(float(f.p_ac[i])),
        ))
    return buf.getvalue()
