import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evratio.errors import EnvelopeViolationError
from evratio.loss_model import OolCoefficients, efficiency, optimal_torque
from evratio.presets import I3_LIMITS, I3_LOSS, I3_OOL
from evratio.ratio_opt import (
    RatioQuery,
    cvt_bounds,
    cvt_schedule,
    optimal_ratio,
    optimal_ratio_closed_form,
    optimal_ratio_numeric,
    ratio_histogram,
    stationary_ratios,
    verify_ratio_optimality,
)
from evratio.vehicle import I3_VEHICLE, KMH, WheelDemand, road_load_stationary, wheel_to_machine

from conftest import ool_coefficients


def stationary_query(v_kmh, d=I3_OOL):
    dem = road_load_stationary(I3_VEHICLE, v_kmh * KMH)
    return RatioQuery(dem.tau_t, dem.omega_t, I3_VEHICLE.eta_t, d)


def test_query_validation():
    with pytest.raises(ValueError):
        RatioQuery(0.0, 10.0, 0.97, I3_OOL)
    with pytest.raises(ValueError):
        RatioQuery(10.0, 0.0, 0.97, I3_OOL)
    q = RatioQuery(97.0, 10.0, 0.97, I3_OOL)
    assert q.kappa == pytest.approx(1e4)


def test_ratio_at_top_speed():
    q = stationary_query(155)
    assert q.omega_t == pytest.approx(123.0, abs=0.05)
    assert q.tau_t == pytest.approx(347.0, abs=0.5)
    assert optimal_ratio_closed_form(q) == pytest.approx(4.40, rel=0.02)


def test_ratio_at_49_kmh():
    assert optimal_ratio_closed_form(stationary_query(49)) == pytest.approx(2.92, rel=0.02)


def test_numeric_matches_closed_form_seeded(rng):
    worst = 0.0
    for _ in range(300):
        q = RatioQuery(rng.uniform(1.0, 600.0), rng.uniform(1.0, 160.0), 0.97, I3_OOL)
        g_cf, g_num = optimal_ratio_closed_form(q), optimal_ratio_numeric(q)
        worst = max(worst, abs(g_cf - g_num) / g_num)
        assert q.residual(g_cf) < 1e-8
        assert q.residual(g_num) < 1e-10
    assert worst < 1e-6


def test_cubic_limit():
    # with d00 = 0 and d02 -> 0 the quartic collapses to a cubic
    d = OolCoefficients(0.0, 11.7843, 1e-12)
    q = RatioQuery(200.0, 50.0, 1.0, d)
    expected = (q.kappa / (d.d01 * q.omega_t)) ** (1.0 / 3.0)
    assert optimal_ratio_numeric(q) == pytest.approx(expected, rel=1e-6)


def test_small_kappa_gives_small_ratio():
    q = RatioQuery(1e-6, 100.0, 1.0, I3_OOL)
    assert optimal_ratio_numeric(q) < 1e-3


def test_optimal_ratio_method_switch():
    q = stationary_query(80)
    assert optimal_ratio(q, "numeric") == pytest.approx(optimal_ratio(q), rel=1e-9)
    with pytest.raises(ValueError):
        optimal_ratio(q, "bisect")


def test_regen_query_uses_inverse_efficiency():
    # braking: machine torque is tau_t*eta_t/gamma, i.e. the motoring formula with 1/eta_t
    tau_t, omega_t, eta_t = 150.0, 20.0, 0.97
    g = optimal_ratio(RatioQuery(tau_t, omega_t, 1.0 / eta_t, I3_OOL))
    p = wheel_to_machine(WheelDemand(omega_t, -tau_t), g, eta_t)
    assert -p.tau == pytest.approx(optimal_torque(I3_OOL, p.omega), rel=1e-8)


def test_verify_ratio_optimality_on_brute_force_maximizer():
    # the efficiency maximizer along a fixed wheel demand, found by a dense scan
    q = stationary_query(49)
    dem = WheelDemand(q.omega_t, q.tau_t)
    grid = np.linspace(1.0, 12.0, 110001)
    eta = efficiency(I3_LOSS, wheel_to_machine(dem, grid, q.eta_t))
    g_best = float(grid[np.argmax(eta)])
    assert verify_ratio_optimality(q, g_best, I3_LOSS, I3_LIMITS)
    assert not verify_ratio_optimality(q, 1.1 * g_best, I3_LOSS)


def test_optimal_line_ratio_is_not_the_constant_power_maximizer():
    # the quartic puts the machine on the optimal operation line, which differs
    # from the best point on the constant-power curve of a fixed wheel demand
    q = stationary_query(49)
    assert not verify_ratio_optimality(q, optimal_ratio(q), I3_LOSS)


def test_verify_reports_envelope_violation():
    q = stationary_query(155)
    with pytest.raises(EnvelopeViolationError):
        verify_ratio_optimality(q, 9.8, I3_LOSS, I3_LIMITS)


def test_cvt_bounds_lower_bound():
    b = cvt_bounds(I3_OOL, I3_VEHICLE)
    assert b.gamma_min == pytest.approx(2.92, rel=0.02)
    assert b.v_at_min / KMH == pytest.approx(49, abs=2)


def test_cvt_bounds_upper_bound_is_at_lowest_speed():
    # the optimal ratio diverges as speed goes to zero, so over 1..155 km/h the
    # largest value sits at the first grid speed rather than at 155 km/h
    b = cvt_bounds(I3_OOL, I3_VEHICLE)
    assert b.v_at_max / KMH == pytest.approx(1.0)
    assert b.gamma_max > 4.40
    top = cvt_bounds(I3_OOL, I3_VEHICLE, (49, 155))
    assert top.gamma_max == pytest.approx(4.40, rel=0.02)
    assert top.v_at_max / KMH == pytest.approx(155.0)


def test_cvt_bounds_restriction_nests():
    full = cvt_bounds(I3_OOL, I3_VEHICLE)
    part = cvt_bounds(I3_OOL, I3_VEHICLE, (60, 100))
    assert full.gamma_min <= part.gamma_min <= part.gamma_max <= full.gamma_max
    with pytest.raises(ValueError):
        cvt_bounds(I3_OOL, I3_VEHICLE, (100, 60))


def test_stationary_ratio_increasing_above_60_kmh():
    r = stationary_ratios(I3_OOL, I3_VEHICLE, np.arange(60, 156) * KMH)
    assert np.all(np.diff(r) > 0)


def test_cvt_schedule_clamps_and_holds():
    demand = WheelDemand(np.array([0.0, 100.0, 100.0, 0.0]), np.array([0.0, 1500.0, -30.0, 0.0]))
    s = cvt_schedule(I3_OOL, I3_VEHICLE, demand, I3_LIMITS)
    assert s.gamma[0] == I3_VEHICLE.gamma_fgt
    assert not s.active[0] and s.active[1] and s.active[2]
    # at 100 rad/s the speed limit caps the ratio below the unconstrained optimum
    assert s.clamped[1]
    assert s.gamma[1] == pytest.approx(I3_LIMITS.omega_max / 100.0)
    assert s.gamma[3] == s.gamma[2]
    assert np.isnan(s.gamma_opt[0])


def test_cvt_schedule_respects_gamma_range():
    demand = WheelDemand(np.array([10.0, 20.0]), np.array([100.0, 200.0]))
    s = cvt_schedule(I3_OOL, I3_VEHICLE, demand, I3_LIMITS, gamma_range=(5.0, 6.0))
    assert np.all((s.gamma >= 5.0) & (s.gamma <= 6.0))


def test_histogram():
    h = ratio_histogram([3.1, 3.2, 4.9, 7.0], bin_width=0.5, threshold=6.0)
    assert h.counts.sum() == 4
    assert h.fraction_below == 0.75
    assert h.edges[0] == 3.0
    assert ratio_histogram([4.2]).counts.tolist() == [1]
    with pytest.raises(ValueError):
        ratio_histogram([])


# property tests


@settings(max_examples=300, deadline=None)
@given(ool_coefficients(), st.floats(1.0, 600.0), st.floats(1.0, 160.0), st.floats(0.8, 1.0))
def test_closed_form_matches_numeric(d, tau_t, omega_t, eta_t):
    q = RatioQuery(tau_t, omega_t, eta_t, d)
    g_num = optimal_ratio_numeric(q)
    g = optimal_ratio(q)
    assert abs(g - g_num) / g_num < 1e-6
    assert q.residual(g) < 1e-8


@settings(max_examples=300, deadline=None)
@given(ool_coefficients(), st.floats(1.0, 600.0), st.floats(1.0, 160.0), st.floats(0.8, 1.0))
def test_substitution_identity(d, tau_t, omega_t, eta_t):
    g = optimal_ratio(RatioQuery(tau_t, omega_t, eta_t, d))
    back = optimal_torque(d, omega_t * g) * g * eta_t
    assert back == pytest.approx(tau_t, rel=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 600.0), st.floats(1.0, 160.0), st.floats(0.1, 10.0))
def test_torque_scaling_with_zero_d00(tau_t, omega_t, s):
    # with d00 = 0, s*tau_t satisfies the quartic at gamma' iff tau_t does at
    # gamma' with kappa scaled by s**2; check by direct substitution
    d = I3_OOL
    g = optimal_ratio(RatioQuery(s * tau_t, omega_t, 0.97, d))
    kappa = (s * tau_t / 0.97) ** 2
    lhs = d.d01 * omega_t * g**3 + d.d02 * omega_t**2 * g**4
    assert lhs == pytest.approx(kappa, rel=1e-8)
    assert (g > optimal_ratio(RatioQuery(tau_t, omega_t, 0.97, d))) == (s > 1)


def test_deterministic():
    q = stationary_query(77)
    assert optimal_ratio_closed_form(q) == optimal_ratio_closed_form(q)
    b1 = cvt_bounds(I3_OOL, I3_VEHICLE, (40, 60))
    b2 = cvt_bounds(I3_OOL, I3_VEHICLE, (40, 60))
    assert b1 == b2
