"""Analytical e-machine loss model and efficiency-optimal transmission ratios."""

from .loss_model import (
    LossCoefficients,
    MachineLimits,
    MachinePoint,
    OolCoefficients,
    alpha_terms,
    c_from_d,
    d_from_c,
    efficiency,
    loss_power,
    ool_efficiency,
    ool_speed_for_efficiency,
    optimal_torque,
    peak_efficiency_point,
)
from .map_fit import (
    DesignPoint,
    EfficiencyMap,
    FitResult,
    fit_second_point,
    reconstruct_map,
    solve_c,
    solve_d,
)
from .ratio_opt import RatioQuery, cvt_bounds, fgt_sweep, optimal_ratio, ratio_histogram
from .vehicle import DriveCycle, VehicleParams, WheelDemand, cycle_to_wheel, road_load_stationary, wheel_to_machine
from .cycle_analysis import average_efficiency, compare, energy_usage

__version__ = "0.1.0"
