"""Command-line interface.

Usage::

    evratio --config run.json --out results/ fit
    evratio --config run.json reconstruct
    evratio --config run.json ratio --v-kmh 155
    evratio --config run.json cycle --policy cvt
    evratio --config run.json sweep
    evratio check --seed 1 --n 1000

The config is one JSON document whose field names carry their units
(``omega_max_rpm``, ``tau_peak_nm`` ...). Values are converted to SI once,
here. Missing ``limits``/``vehicle`` sections fall back to the BMW i3 data.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import presets
from .cycle_analysis import average_efficiency, compare, cycle_trace
from .errors import (
    ClosedFormDegenerateError,
    EnvelopeViolationError,
    InfeasibleDesignPointError,
    MapFormatError,
    NoFeasibleCandidateError,
    NoPositiveRootError,
    ZeroEnergyError,
)
from .loss_model import (
    RADS_TO_RPM,
    LossCoefficients,
    MachineLimits,
    c_from_d,
    d_from_c,
    efficiency,
    rpm_to_rads,
)
from .map_fit import (
    DesignPoint,
    FitResult,
    default_grid,
    fit_second_point,
    load_map,
    ool_rmse,
    reconstruct_map,
    save_map,
    solve_c,
    solve_d,
)
from .ratio_opt import (
    RatioQuery,
    fgt_sweep,
    optimal_ratio_closed_form,
    optimal_ratio_numeric,
    ratio_histogram,
)
from .vehicle import (
    I3_VEHICLE,
    KMH,
    VehicleParams,
    WheelDemand,
    cycle_to_wheel,
    load_cycle,
    road_load_stationary,
    wheel_to_machine,
)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
AGREEMENT_TOL = 1e-6


class ConfigError(Exception):
    pass


class NumericValidationError(Exception):
    pass


@dataclass
class RunConfig:
    coefficients: LossCoefficients | None
    reference_map: Path | None
    design_points: list | None
    limits: MachineLimits
    vehicle: VehicleParams
    cycle: Path | None
    options: dict


def _limits_from(cfg: dict) -> MachineLimits:
    try:
        return MachineLimits(
            tau_cont_max=float(cfg["tau_cont_nm"]),
            tau_peak_max=float(cfg["tau_peak_nm"]),
            omega_rated=rpm_to_rads(float(cfg["omega_rated_rpm"])),
            omega_max=rpm_to_rads(float(cfg["omega_max_rpm"])),
            p_cont_max=float(cfg["p_cont_kw"]) * 1e3,
            p_peak_max=float(cfg["p_peak_kw"]) * 1e3,
        )
    except KeyError as exc:
        raise ConfigError(f"limits: missing field {exc}") from exc


_VEHICLE_KEYS = {
    "m0_kg": "m0", "mp_kg": "mp", "af_m2": "Af", "cd": "cd", "cr": "cr", "rw_m": "rw",
    "eta_t": "eta_t", "lambda": "lam", "kappa_r": "kappa_R", "gamma_fgt": "gamma_fgt",
    "rho_air_kgm3": "rho_air", "g_ms2": "g",
}


def _vehicle_from(cfg: dict) -> VehicleParams:
    unknown = set(cfg) - set(_VEHICLE_KEYS)
    if unknown:
        raise ConfigError(f"vehicle: unknown field(s) {sorted(unknown)}")
    kwargs = {_VEHICLE_KEYS[k]: float(v) for k, v in cfg.items()}
    return replace(I3_VEHICLE, **kwargs)


def load_config(path) -> RunConfig:
    if path is None:
        raw = {}
        base = Path.cwd()
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        base = path.parent
    machine = raw.get("machine", {})
    coeffs = machine.get("coefficients")
    ref = machine.get("reference_map")
    if coeffs is not None and ref is not None:
        raise ConfigError("machine: give either coefficients or a reference map, not both")
    try:
        c = LossCoefficients(**{k: float(v) for k, v in coeffs.items()}) if coeffs is not None else None
        limits = _limits_from(raw["limits"]) if "limits" in raw else presets.I3_LIMITS
        vehicle = _vehicle_from(raw.get("vehicle", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if c is None and ref is None:
        c = presets.I3_LOSS
    dps = machine.get("design_points")
    if dps is not None:
        try:
            dps = [DesignPoint.from_rpm(float(p["tau_nm"]), float(p["omega_rpm"]), float(p["eta"])) for p in dps]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"machine.design_points: {exc}") from exc
    resolve = lambda p: None if p is None else (base / p if not Path(p).is_absolute() else Path(p))  # noqa: E731
    ref_path = resolve(ref)
    if ref_path is not None and not ref_path.is_file():
        raise ConfigError(f"reference map not found: {ref_path}")
    return RunConfig(c, ref_path, dps, limits, vehicle, resolve(raw.get("cycle")), raw.get("options", {}))


def _emit(data: dict, fmt: str, out: Path | None, name: str):
    if fmt == "json":
        text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    else:
        text = "key,value\n" + "".join(f"{k},{v}\n" for k, v in sorted(_flatten(data).items()))
    sys.stdout.write(text)
    if out is not None:
        (out / f"{name}.{fmt}").write_text(text)


def _flatten(d, prefix=""):
    flat = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            for i, item in enumerate(v):
                if isinstance(item, dict):
                    flat.update(_flatten(item, f"{key}.{i}."))
                else:
                    flat[f"{key}.{i}"] = item
        else:
            flat[key] = v
    return flat


def _machine(cfg: RunConfig) -> LossCoefficients:
    if cfg.coefficients is not None:
        return cfg.coefficients
    return _fit(cfg).c


def _fit(cfg: RunConfig):
    if cfg.reference_map is None:
        raise ConfigError("fit needs machine.reference_map")
    emap = load_map(cfg.reference_map, cfg.limits)
    if cfg.design_points is not None and len(cfg.design_points) == 3:
        d = solve_d(cfg.design_points)
        c20, c11 = solve_c(d, cfg.design_points[1:])
        c = c_from_d(d, c20, c11)
        return FitResult(d, c, tuple(cfg.design_points), ool_rmse(emap, d, c))
    p1 = p3 = None
    if cfg.design_points is not None:
        if len(cfg.design_points) != 2:
            raise ConfigError("machine.design_points: give 2 points (first, third) or all 3")
        p1, p3 = cfg.design_points
    return fit_second_point(emap, p1, p3)


def cmd_fit(cfg, args, out):
    res = _fit(cfg)
    if out is not None:
        (out / "fit.json").write_text(res.to_json() + "\n")
        lines = ["omega_rpm,rmse"] + [f"{w * RADS_TO_RPM!r},{r!r}" for w, r in res.candidates]
        (out / "fit_candidates.csv").write_text("\n".join(lines) + "\n")
    _emit(res.as_dict(), args.format, None, "fit")


def cmd_reconstruct(cfg, args, out):
    c = _machine(cfg)
    opts = cfg.options.get("grid", {})
    grid = default_grid(cfg.limits, float(opts.get("omega_step_rpm", 100.0)), float(opts.get("tau_step_nm", 1.0)))
    emap = reconstruct_map(c, cfg.limits, grid)
    target = out / "map.csv" if out is not None else Path("map.csv")
    save_map(target, emap)
    tau, w = emap.argmax()
    _emit({"map": str(target), "cells": int(emap.valid.sum()),
           "argmax_tau_nm": float(tau), "argmax_omega_rpm": float(w * RADS_TO_RPM),
           "argmax_eta": float(np.nanmax(emap.eta))}, args.format, None, "reconstruct")


def cmd_ratio(cfg, args, out):
    c = _machine(cfg)
    if args.v_kmh is not None:
        dem = road_load_stationary(cfg.vehicle, args.v_kmh * KMH)
        tau_t, omega_t = dem.tau_t, dem.omega_t
    else:
        if args.tau_t is None or args.omega_t is None:
            raise ConfigError("ratio needs --v-kmh or both --tau-t and --omega-t")
        tau_t, omega_t = args.tau_t, args.omega_t
    try:
        q = RatioQuery(tau_t, omega_t, cfg.vehicle.eta_t, d_from_c(c))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    g_num = optimal_ratio_numeric(q)
    try:
        g_cf = optimal_ratio_closed_form(q)
    except ClosedFormDegenerateError as exc:
        raise NumericValidationError(f"closed form failed: {exc}") from exc
    rel = abs(g_cf - g_num) / g_num
    p = wheel_to_machine(WheelDemand(omega_t, tau_t), g_cf, cfg.vehicle.eta_t)
    data = {
        "tau_t_nm": tau_t, "omega_t_rads": omega_t,
        "gamma_closed_form": g_cf, "gamma_numeric": g_num, "relative_difference": rel,
        "residual": q.residual(g_cf),
        "tau_m_nm": p.tau, "omega_m_rpm": p.omega * RADS_TO_RPM,
        "eta_m": efficiency(c, p), "in_envelope": bool(cfg.limits.contains(p)),
    }
    _emit(data, args.format, out, "ratio")
    if rel > AGREEMENT_TOL:
        raise NumericValidationError(f"closed form and numeric ratio disagree by {rel:.3g}")


def _cycle(cfg):
    if cfg.cycle is None:
        raise ConfigError("config needs a cycle file")
    if not cfg.cycle.is_file():
        raise ConfigError(f"cycle file not found: {cfg.cycle}")
    return load_cycle(cfg.cycle)


def cmd_cycle(cfg, args, out):
    c = _machine(cfg)
    cyc = _cycle(cfg)
    weighting = cfg.options.get("weighting", "energy")
    gamma = cfg.options.get("gamma", cfg.vehicle.gamma_fgt)
    policy = "cvt" if args.policy == "cvt" else float(args.gamma if args.gamma is not None else gamma)
    rep = average_efficiency(c, cfg.limits, cfg.vehicle, cyc, policy, weighting=weighting)
    data = rep.as_dict()
    if args.policy == "compare":
        cvt = average_efficiency(c, cfg.limits, cfg.vehicle, cyc, "cvt", weighting=weighting)
        data = {"fgt": rep.as_dict(), "cvt": cvt.as_dict(),
                "comparison": compare(rep, cvt, float(cfg.options.get("margin", 0.0)))}
    if out is not None:
        (out / "trace.csv").write_text(cycle_trace(c, cfg.limits, cfg.vehicle, cyc, policy))
    _emit(data, args.format, out, "cycle_report")


def cmd_sweep(cfg, args, out):
    c = _machine(cfg)
    cyc = _cycle(cfg)
    g = cfg.options.get("gamma_grid", {})
    grid = np.round(np.arange(float(g.get("start", 2.0)), float(g.get("stop", 12.0)) + 1e-9,
                              float(g.get("step", 0.05))), 10)
    weighting = cfg.options.get("weighting", "energy")
    try:
        res = fgt_sweep(c, cfg.limits, cfg.vehicle, cyc, grid, weighting=weighting)
    except ValueError as exc:
        raise InfeasibleDesignPointError(str(exc)) from exc
    traction = np.asarray(cycle_to_wheel(cfg.vehicle, cyc).tau_t) > 0
    hist = ratio_histogram(res.cvt_optimal_ratios[traction])
    summary = {
        "gamma_fgt_opt": res.gamma_fgt_opt, "eta_fgt_opt": res.eta_fgt_opt,
        "eta_avg_cvt": res.eta_avg_cvt, "cvt_mean_ratio": res.cvt_mean_ratio,
        "clamp_events": res.cvt_report.clamp_events, "weighting": weighting,
        "fraction_below_threshold": hist.fraction_below, "threshold": hist.threshold,
        "feasible_ratios": int(res.feasible.sum()),
    }
    if out is not None:
        rows = ["gamma,eta_avg"] + [
            f"{gg!r},{'' if np.isnan(e) else repr(float(e))}" for gg, e in zip(res.gamma_grid.tolist(), res.eta_avg_fgt)
        ]
        (out / "sweep.csv").write_text("\n".join(rows) + "\n")
        hrows = ["bin_lo,bin_hi,count"] + [f"{a!r},{b!r},{n}" for a, b, n in hist.rows()]
        (out / "histogram.csv").write_text("\n".join(hrows) + "\n")
    _emit(summary, args.format, out, "sweep_summary")


def cmd_check(cfg, args, out):
    """Randomized cross-check of the closed-form ratio against the numeric root."""
    rng = np.random.default_rng(args.seed)
    d = d_from_c(_machine(cfg))
    worst = 0.0
    for _ in range(args.n):
        q = RatioQuery(rng.uniform(1.0, 600.0), rng.uniform(1.0, 160.0), cfg.vehicle.eta_t, d)
        g_cf = optimal_ratio_closed_form(q)
        g_num = optimal_ratio_numeric(q)
        worst = max(worst, abs(g_cf - g_num) / g_num)
    _emit({"queries": args.n, "seed": args.seed, "max_relative_difference": worst}, args.format, out, "check")
    if worst > AGREEMENT_TOL:
        raise NumericValidationError(f"max disagreement {worst:.3g}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evratio", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="run configuration (JSON)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", help="fit the loss model to a reference map")
    sub.add_parser("reconstruct", help="write the analytical efficiency map")
    r = sub.add_parser("ratio", help="optimal ratio for one wheel demand")
    r.add_argument("--tau-t", type=float, help="wheel torque [Nm]")
    r.add_argument("--omega-t", type=float, help="wheel speed [rad/s]")
    r.add_argument("--v-kmh", type=float, help="stationary speed [km/h]; sets the demand from road load")
    cy = sub.add_parser("cycle", help="average machine efficiency over the drive cycle")
    cy.add_argument("--policy", choices=("fixed", "cvt", "compare"), default="fixed")
    cy.add_argument("--gamma", type=float, help="fixed ratio (defaults to the vehicle's)")
    sub.add_parser("sweep", help="fixed-ratio sweep, CVT average and ratio histogram")
    ck = sub.add_parser("check", help="randomized closed-form vs numeric ratio check")
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--n", type=int, default=1000)
    return ap


COMMANDS = {
    "fit": cmd_fit, "reconstruct": cmd_reconstruct, "ratio": cmd_ratio,
    "cycle": cmd_cycle, "sweep": cmd_sweep, "check": cmd_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = None
        if args.out is not None:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args, out)
    except (ConfigError, MapFormatError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoFeasibleCandidateError, InfeasibleDesignPointError, EnvelopeViolationError, ZeroEnergyError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericValidationError, ClosedFormDegenerateError, NoPositiveRootError) as exc:
        print(f"numeric validation failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
