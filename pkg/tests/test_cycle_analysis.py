import csv
import io

import numpy as np
import pytest

from evratio.cycle_analysis import (
    TRACE_HEADER,
    average_efficiency,
    compare,
    cycle_trace,
    energy_usage,
    sample_flows,
)
from evratio.errors import ZeroEnergyError
from evratio.loss_model import efficiency, loss_power
from evratio.presets import I3_LIMITS, I3_LOSS
from evratio.ratio_opt import fgt_sweep
from evratio.vehicle import I3_VEHICLE, DriveCycle, cycle_to_wheel, load_cycle, wheel_to_machine

from conftest import WLTC_CSV


@pytest.fixture(scope="module")
def wltc():
    return load_cycle(WLTC_CSV)


def run(cyc, policy, **kw):
    return average_efficiency(I3_LOSS, I3_LIMITS, I3_VEHICLE, cyc, policy, **kw)


def test_constant_speed_cycle_equals_point_efficiency():
    cyc = DriveCycle.constant(20.0, 30.0)
    demand = cycle_to_wheel(I3_VEHICLE, cyc)
    p = wheel_to_machine(demand, 9.665, I3_VEHICLE.eta_t)
    expected = efficiency(I3_LOSS, type(p)(p.tau[0], p.omega[0]))
    for weighting in ("time", "energy"):
        rep = run(cyc, 9.665, weighting=weighting)
        assert rep.eta_avg_motoring == pytest.approx(expected, rel=1e-12)
        assert rep.eta_avg_combined == pytest.approx(expected, rel=1e-12)


def test_idle_cycle_has_no_energy():
    with pytest.raises(ZeroEnergyError):
        run(DriveCycle.constant(0.0, 10.0), 9.665)
    with pytest.raises(ZeroEnergyError):
        energy_usage(I3_LOSS, I3_LIMITS, I3_VEHICLE, DriveCycle.constant(0.0, 10.0), 9.665)


def test_bad_policy_and_weighting(wltc):
    with pytest.raises(ValueError):
        run(wltc, "automatic")
    with pytest.raises(ValueError):
        run(wltc, -1.0)
    with pytest.raises(ValueError):
        run(wltc, 9.665, weighting="power")


def test_sample_flows_bookkeeping(wltc):
    demand = cycle_to_wheel(I3_VEHICLE, wltc)
    f = sample_flows(I3_LOSS, demand, 9.665, I3_VEHICLE.eta_t)
    m, r = f.motoring, f.regen
    np.testing.assert_allclose(f.p_ac[m], f.p_mech[m] + f.p_loss[m], rtol=1e-12)
    np.testing.assert_allclose(-f.p_ac[r], f.p_mech[r] - f.p_loss[r], rtol=1e-12)
    np.testing.assert_allclose(f.p_loss, loss_power(I3_LOSS, f.point), rtol=1e-14)
    assert not np.any(m & r) and not np.any(r & f.skipped)
    assert np.all(f.p_ac[~(m | r)] == 0.0)
    assert np.all((f.eta[m | r] > 0) & (f.eta[m | r] < 1))


def test_energy_totals(wltc):
    rep = run(wltc, 9.665)
    assert rep.energy_ac_kwh - rep.energy_loss_kwh == pytest.approx(rep.energy_mech_kwh, rel=1e-12)
    net = rep.energy_ac_kwh - rep.energy_regen_kwh
    assert rep.energy_per_100km == pytest.approx(net / rep.distance_km * 100, rel=1e-12)
    per_100, km = energy_usage(I3_LOSS, I3_LIMITS, I3_VEHICLE, wltc, 9.665)
    assert per_100 == pytest.approx(rep.energy_per_100km, rel=1e-12)
    assert km == pytest.approx(23.27, abs=0.05)


def test_fixed_ratio_wltc_in_envelope(wltc):
    rep = run(wltc, 9.665)
    assert rep.envelope_violations == 0
    assert rep.mean_ratio == pytest.approx(9.665)
    assert 0.8 < rep.eta_avg_combined < 1.0


def test_cvt_beats_every_fixed_ratio_on_wltc(wltc):
    cvt = run(wltc, "cvt")
    sweep = fgt_sweep(I3_LOSS, I3_LIMITS, I3_VEHICLE, wltc, np.arange(3.0, 12.0, 0.5))
    assert cvt.eta_avg_combined > np.nanmax(sweep.eta_avg_fgt)
    assert sweep.eta_avg_cvt == cvt.eta_avg_combined
    assert sweep.gamma_fgt_opt in sweep.gamma_grid


def test_sweep_masks_ratios_beyond_speed_limit(wltc):
    # top WLTC wheel speed is about 104 rad/s, so ratios above ~11.4 overspeed the machine
    sweep = fgt_sweep(I3_LOSS, I3_LIMITS, I3_VEHICLE, wltc, np.array([5.0, 11.0, 12.0]))
    assert sweep.feasible.tolist() == [True, True, False]
    assert np.isnan(sweep.eta_avg_fgt[2])
    with pytest.raises(ValueError):
        fgt_sweep(I3_LOSS, I3_LIMITS, I3_VEHICLE, wltc, np.array([20.0]))


def test_compare(wltc):
    fgt, cvt = run(wltc, 9.665), run(wltc, "cvt")
    out = compare(fgt, cvt, margin=0.005)
    assert out["deltas"]["eta_avg_combined"] == pytest.approx(cvt.eta_avg_combined - fgt.eta_avg_combined)
    assert out["cvt_beats_margin"]
    assert not compare(fgt, cvt, margin=0.5)["cvt_beats_margin"]


def test_cycle_trace(wltc):
    text = cycle_trace(I3_LOSS, I3_LIMITS, I3_VEHICLE, wltc, "cvt")
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == TRACE_HEADER
    assert len(rows) == wltc.t.size + 1
    # idle first sample has an empty efficiency field
    assert rows[1][TRACE_HEADER.index("eta_m")] == ""


def test_time_weighting_differs_from_energy(wltc):
    e = run(wltc, 9.665, weighting="energy")
    t = run(wltc, 9.665, weighting="time")
    assert t.weighting == "time"
    assert t.eta_avg_combined != e.eta_avg_combined


def test_deterministic(wltc):
    a = run(wltc, "cvt").as_dict()
    b = run(wltc, "cvt").as_dict()
    assert a == b
