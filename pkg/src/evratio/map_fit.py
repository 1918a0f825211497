"""Fitting the loss model to an efficiency map from three design points.

The first design point sits at the origin, the third at the map's best
optimal-line efficiency, and the second is scanned over the map's speed grid
to minimize the RMS efficiency error along the optimal operation line.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    InfeasibleDesignPointError,
    MapFormatError,
    NoFeasibleCandidateError,
    SingularSystemError,
)
from .loss_model import (
    RADS_TO_RPM,
    RPM_TO_RADS,
    LossCoefficients,
    MachineLimits,
    MachinePoint,
    OolCoefficients,
    c_from_d,
    efficiency,
    ool_efficiency,
    optimal_torque,
)

MAP_HEADER = ("omega_rpm", "tau_nm", "eta")


@dataclass(frozen=True)
class DesignPoint:
    tau_star: float
    omega_star: float
    eta_star: float

    def __post_init__(self):
        if self.tau_star < 0 or self.omega_star < 0:
            raise ValueError("design point torque and speed must be non-negative")
        if not 0.0 <= self.eta_star < 1.0:
            raise ValueError("design point efficiency must lie in [0, 1)")
        at_origin = self.tau_star == 0 and self.omega_star == 0
        if self.eta_star == 0 and not at_origin:
            raise ValueError("zero efficiency is only allowed at the origin")

    @property
    def is_origin(self) -> bool:
        return self.tau_star == 0 and self.omega_star == 0

    @classmethod
    def from_rpm(cls, tau_star, omega_rpm, eta_star):
        return cls(tau_star, omega_rpm * RPM_TO_RADS, eta_star)

    def as_dict(self) -> dict:
        return {
            "tau_nm": self.tau_star,
            "omega_rads": self.omega_star,
            "omega_rpm": self.omega_star * RADS_TO_RPM,
            "eta": self.eta_star,
        }


@dataclass
class EfficiencyMap:
    """Gridded efficiency ``eta[i, j]`` at speed ``omega_rpm[i]`` and torque
    ``tau_grid[j]``. Invalid cells (outside the envelope, zero power) are
    False in ``valid`` and NaN in ``eta``.

    The speed grid is stored in rpm so that the CSV round trip is exact.
    """

    omega_rpm: np.ndarray
    tau_grid: np.ndarray
    eta: np.ndarray
    valid: np.ndarray
    limits: MachineLimits | None = None

    def __post_init__(self):
        self.omega_rpm = np.asarray(self.omega_rpm, dtype=float)
        self.tau_grid = np.asarray(self.tau_grid, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        shape = (self.omega_rpm.size, self.tau_grid.size)
        if self.omega_rpm.ndim != 1 or self.tau_grid.ndim != 1 or 0 in shape:
            raise ValueError("map grids must be non-empty 1-D arrays")
        if self.eta.shape != shape or self.valid.shape != shape:
            raise ValueError(f"eta/valid must have shape {shape}")
        if np.any(np.diff(self.omega_rpm) <= 0) or np.any(np.diff(self.tau_grid) <= 0):
            raise ValueError("map grids must be strictly increasing")
        cells = self.eta[self.valid]
        if np.any(~np.isfinite(cells)) or np.any((cells < 0) | (cells > 1)):
            raise ValueError("valid cells must hold efficiencies in [0, 1]")
        self.eta = np.where(self.valid, self.eta, np.nan)

    @property
    def omega_grid(self) -> np.ndarray:
        return self.omega_rpm * RPM_TO_RADS

    def __eq__(self, other):
        if not isinstance(other, EfficiencyMap):
            return NotImplemented
        return (
            np.array_equal(self.omega_rpm, other.omega_rpm)
            and np.array_equal(self.tau_grid, other.tau_grid)
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.eta[self.valid], other.eta[other.valid])
        )

    def argmax(self):
        """(tau, omega) of the best valid cell."""
        flat = np.nanargmax(self.eta)
        i, j = np.unravel_index(flat, self.eta.shape)
        return self.tau_grid[j], self.omega_grid[i]


@dataclass
class FitResult:
    d: OolCoefficients
    c: LossCoefficients
    design_points: tuple
    rmse: float
    candidates: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "d": list(self.d.as_tuple()),
            "c": self.c.as_dict(),
            "design_points": [p.as_dict() for p in self.design_points],
            "rmse": self.rmse,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _solve_pivoted(A, b, rtol=1e-12):
    """Gaussian elimination with partial pivoting for tiny dense systems.

    A pivot smaller than ``rtol`` times its row norm counts as singular.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    row_norm = np.abs(A).max(axis=1)
    if np.any(row_norm == 0):
        raise SingularSystemError("zero row in linear system")
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if p != k:
            A[[k, p]] = A[[p, k]]
            b[[k, p]] = b[[p, k]]
            row_norm[[k, p]] = row_norm[[p, k]]
        if abs(A[k, k]) < rtol * row_norm[k]:
            raise SingularSystemError("linear system is singular to working precision")
        for i in range(k + 1, n):
            f = A[i, k] / A[k, k]
            A[i, k:] -= f * A[k, k:]
            b[i] -= f * b[k]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - A[k, k + 1 :] @ x[k + 1 :]) / A[k, k]
    return x


def _clean_nonnegative(values, scales, what):
    """Zero out round-off negatives; reject genuinely negative values."""
    out = []
    for v, s in zip(values, scales):
        if v < 0:
            if abs(v) * s <= 1e-9:
                v = 0.0
            else:
                raise InfeasibleDesignPointError(f"{what} yields a negative coefficient ({v:.6g})")
        out.append(float(v))
    return out


def solve_d(points) -> OolCoefficients:
    """Coefficients of ``beta`` interpolating ``tau_i**2`` at the three design speeds."""
    points = tuple(points)
    if len(points) != 3:
        raise ValueError("solve_d needs exactly three design points")
    w = np.array([p.omega_star for p in points])
    tau2 = np.array([p.tau_star for p in points]) ** 2
    if len(set(w.tolist())) < 3:
        raise SingularSystemError("design point speeds must be distinct")
    # scale speeds to O(1) before elimination
    s = w.max()
    x = w / s
    e = _solve_pivoted(np.column_stack([np.ones(3), x, x * x]), tau2)
    d = [e[0], e[1] / s, e[2] / s**2]
    scale = max(tau2.max(), 1e-300)
    d = _clean_nonnegative(d, [1 / scale, s / scale, s * s / scale], "design points")
    try:
        return OolCoefficients(*d)
    except ValueError as exc:
        raise InfeasibleDesignPointError(str(exc)) from exc


def solve_c(d: OolCoefficients, points) -> tuple[float, float]:
    """``(c20, c11)`` from the optimal-line efficiency at two design points.

    Torques are taken on the line ``d`` at the design speeds.
    """
    points = tuple(points)
    if len(points) != 2:
        raise ValueError("solve_c needs exactly two design points")
    rows, rhs = [], []
    for p in points:
        if not (p.tau_star * p.omega_star > 0 and 0 < p.eta_star < 1):
            raise InfeasibleDesignPointError("solve_c needs positive power and 0 < eta < 1")
        tau = optimal_torque(d, p.omega_star)
        rows.append([2.0 * tau, p.omega_star])
        rhs.append((1.0 / p.eta_star - 1.0) * p.omega_star)
    c20, c11 = _solve_pivoted(rows, rhs)
    scale = max(abs(r) for r in rhs)
    c20, c11 = _clean_nonnegative(
        [c20, c11], [2 * max(r[0] for r in rows) / scale, max(r[1] for r in rows) / scale], "efficiencies"
    )
    if c20 <= 0:
        raise InfeasibleDesignPointError("c20 must be strictly positive")
    return c20, c11


def default_grid(limits: MachineLimits, omega_step_rpm=100.0, tau_step=1.0):
    """Speed grid (rpm) and torque grid (Nm) spanning the peak envelope.

    Both start one step above zero; zero-power cells carry no efficiency.
    """
    n_max = limits.omega_max * RADS_TO_RPM
    omega_rpm = np.arange(omega_step_rpm, n_max + 0.5 * omega_step_rpm, omega_step_rpm)
    omega_rpm = omega_rpm[omega_rpm <= n_max * (1 + 1e-12)]
    tau = np.arange(tau_step, limits.tau_peak_max + 0.5 * tau_step, tau_step)
    tau = tau[tau <= limits.tau_peak_max * (1 + 1e-12)]
    return omega_rpm, tau


def reconstruct_map(c: LossCoefficients, limits: MachineLimits, grid_spec=None) -> EfficiencyMap:
    """Analytical efficiency map on ``grid_spec = (omega_rpm, tau_nm)``.

    Cells above the peak torque envelope or with zero power are masked.
    """
    omega_rpm, tau = grid_spec if grid_spec is not None else default_grid(limits)
    omega_rpm = np.asarray(omega_rpm, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if omega_rpm.size == 0 or tau.size == 0:
        raise ValueError("empty grid")
    w = omega_rpm * RPM_TO_RADS
    if w.min() < 0 or tau.min() < 0:
        raise ValueError("grid must be non-negative")
    if w.max() > limits.omega_max * (1 + 1e-9) or tau.max() > limits.tau_peak_max * (1 + 1e-9):
        raise ValueError("grid exceeds the machine limits")
    W, T = np.meshgrid(w, tau, indexing="ij")
    env = np.broadcast_to(np.asarray(limits.torque_envelope(w))[:, None], W.shape)
    valid = (W * T > 0) & (T <= env * (1 + 1e-12))
    eta = np.full(W.shape, np.nan)
    eta[valid] = efficiency(c, MachinePoint(T[valid], W[valid]))
    return EfficiencyMap(omega_rpm, tau, eta, valid, limits)


def column_optimum(emap: EfficiencyMap, i: int):
    """Best-efficiency torque at speed column ``i``.

    Returns ``(tau, eta, interior)`` or None for an empty column. The grid
    argmax is refined by fitting ``(1/eta - 1)*omega = a/tau + b + c*tau``
    (the shape of the loss model along torque) through the argmax cell and its
    two neighbours. ``interior`` is False when the argmax sits on the first or
    last valid cell, i.e. the column has no stationary optimum inside the map.
    """
    w = emap.omega_grid[i]
    cols = np.flatnonzero(emap.valid[i] & (emap.tau_grid > 0))
    if w <= 0 or cols.size == 0:
        return None
    k = int(np.argmax(emap.eta[i, cols]))
    j = cols[k]
    tau_j, eta_j = float(emap.tau_grid[j]), float(emap.eta[i, j])
    if k == 0 or k == cols.size - 1:
        return tau_j, eta_j, False
    js = cols[k - 1 : k + 2]
    t = emap.tau_grid[js]
    y = (1.0 / emap.eta[i, js] - 1.0) * w
    try:
        a, b, cc = _solve_pivoted(np.column_stack([1.0 / t, np.ones(3), t]), y)
    except SingularSystemError:
        return tau_j, eta_j, True
    if a > 0 and cc > 0:
        tau_star = math.sqrt(a / cc)
        if t[0] <= tau_star <= t[2]:
            eta_star = w / (w + 2.0 * math.sqrt(a * cc) + b)
            if 0 < eta_star < 1:
                return tau_star, eta_star, True
    return tau_j, eta_j, True


def map_ool(emap: EfficiencyMap):
    """Per-column optima as arrays ``(omega, tau, eta, interior)``."""
    rows = []
    for i in range(emap.omega_rpm.size):
        opt = column_optimum(emap, i)
        if opt is not None:
            rows.append((emap.omega_grid[i], *opt))
    if not rows:
        return np.empty(0), np.empty(0), np.empty(0), np.empty(0, dtype=bool)
    w, t, e, interior = zip(*rows)
    return np.array(w), np.array(t), np.array(e), np.array(interior, dtype=bool)


def ool_rmse(emap: EfficiencyMap, d: OolCoefficients, c: LossCoefficients) -> float:
    """RMS gap between model and map efficiency along the model's optimal line.

    Speeds where the model's optimal torque leaves the map's valid cells are
    excluded from the average.
    """
    tg = emap.tau_grid
    rows = np.flatnonzero(emap.omega_grid > 0)
    if rows.size == 0 or tg.size < 2:
        return math.inf
    w = emap.omega_grid[rows]
    tau = optimal_torque(d, w)
    j = np.clip(np.searchsorted(tg, tau, side="right") - 1, 0, tg.size - 2)
    inside = (tau >= tg[0]) & (tau <= tg[-1])
    lo, hi = emap.valid[rows, j], emap.valid[rows, j + 1]
    f = (tau - tg[j]) / (tg[j + 1] - tg[j])
    # a torque landing exactly on a valid cell needs only that cell
    use = inside & ((lo & hi) | (lo & (f == 0)) | (hi & (f == 1)))
    if not use.any():
        return math.inf
    e_lo = np.where(lo, emap.eta[rows, j], 0.0)
    e_hi = np.where(hi, emap.eta[rows, j + 1], 0.0)
    eta_map = np.where(f == 0, e_lo, np.where(f == 1, e_hi, (1 - f) * e_lo + f * e_hi))
    err = ool_efficiency(c, w[use]) - eta_map[use]
    return float(np.sqrt(np.mean(err * err)))


def best_ool_point(emap: EfficiencyMap) -> DesignPoint:
    """Map point with the highest efficiency among stationary column optima."""
    w, t, e, interior = map_ool(emap)
    if not interior.any():
        raise NoFeasibleCandidateError("map has no interior optimum along torque")
    k = int(np.argmax(np.where(interior, e, -np.inf)))
    return DesignPoint(float(t[k]), float(w[k]), float(e[k]))


def fit_second_point(reference: EfficiencyMap, point1: DesignPoint | None = None,
                     point3: DesignPoint | None = None) -> FitResult:
    """Scan the second design point over the map's speed grid.

    ``point1`` defaults to the origin and ``point3`` to ``best_ool_point``.
    Candidates whose coefficients fall outside the model family are skipped;
    ties keep the lowest speed.
    """
    point1 = point1 if point1 is not None else DesignPoint(0.0, 0.0, 0.0)
    if not point1.is_origin:
        raise ValueError("the first design point must be the origin")
    point3 = point3 if point3 is not None else best_ool_point(reference)
    w, t, e, interior = map_ool(reference)
    best = None
    scanned = []
    for wi, ti, ei, ok in zip(w, t, e, interior):
        if not ok or wi == point3.omega_star or not 0 < ei < 1:
            continue
        p2 = DesignPoint(float(ti), float(wi), float(ei))
        try:
            d = solve_d((point1, p2, point3))
            c20, c11 = solve_c(d, (p2, point3))
            c = c_from_d(d, c20, c11)
        except (InfeasibleDesignPointError, SingularSystemError, ValueError):
            continue
        rmse = ool_rmse(reference, d, c)
        if not math.isfinite(rmse):
            continue
        scanned.append((float(wi), rmse))
        if best is None or rmse < best.rmse:
            best = FitResult(d, c, (point1, p2, point3), rmse)
    if best is None:
        raise NoFeasibleCandidateError("no feasible second design point on the map")
    best.candidates = scanned
    return best


def save_map(path, emap: EfficiencyMap) -> None:
    """Write the long-format map CSV (valid cells only, sorted by speed then torque)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MAP_HEADER)
    for i, n in enumerate(emap.omega_rpm):
        for j, tau in enumerate(emap.tau_grid):
            if emap.valid[i, j]:
                writer.writerow((repr(float(n)), repr(float(tau)), repr(float(emap.eta[i, j]))))
    Path(path).write_text(buf.getvalue())


def load_map(path, limits: MachineLimits | None = None) -> EfficiencyMap:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise MapFormatError(f"{path}: empty map file")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    missing = [h for h in MAP_HEADER if h not in header]
    if missing:
        raise MapFormatError(f"{path}: missing column(s) {missing}")
    idx = [header.index(h) for h in MAP_HEADER]
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        try:
            rows.append(tuple(float(rec[k]) for k in idx))
        except (ValueError, IndexError) as exc:
            raise MapFormatError(f"{path}: bad record {rec!r}") from exc
    if not rows:
        raise MapFormatError(f"{path}: no data rows")
    keys = [(r[0], r[1]) for r in rows]
    if any(b <= a for a, b in zip(keys, keys[1:])):
        raise MapFormatError(f"{path}: rows must be strictly increasing in (omega_rpm, tau_nm)")
    omega_rpm = np.unique([k[0] for k in keys])
    tau = np.unique([k[1] for k in keys])
    eta = np.full((omega_rpm.size, tau.size), np.nan)
    valid = np.zeros_like(eta, dtype=bool)
    oi = np.searchsorted(omega_rpm, [k[0] for k in keys])
    ti = np.searchsorted(tau, [k[1] for k in keys])
    eta[oi, ti] = [r[2] for r in rows]
    valid[oi, ti] = True
    try:
        return EfficiencyMap(omega_rpm, tau, eta, valid, limits)
    except ValueError as exc:
        raise MapFormatError(f"{path}: {exc}") from exc
