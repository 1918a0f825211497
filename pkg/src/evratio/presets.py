"""Reference data for the BMW i3 case study (machine fit, limits, vehicle)."""

from .loss_model import LossCoefficients, MachineLimits, OolCoefficients, rpm_to_rads

# fitted optimal-line and loss coefficients (SI units, speeds in rad/s)
I3_OOL = OolCoefficients(d00=0.0, d01=11.7843, d02=6.3048e-04)
I3_LOSS = LossCoefficients(c00=0.0, c01=0.5732, c02=3.069e-05, c11=0.0160, c20=0.0487)

# design points on the optimal operation line: (tau Nm, speed rpm, efficiency)
I3_DESIGN_POINTS = (
    (0.0, 0.0, 0.0),
    (41.7, 1396.0, 0.958),
    (78.7, 4886.0, 0.970),
)
I3_RMSE = 0.0044

I3_LIMITS = MachineLimits(
    tau_cont_max=150.0,
    tau_peak_max=250.0,
    omega_rated=rpm_to_rads(4800.0),
    omega_max=rpm_to_rads(11400.0),
    p_cont_max=75e3,
    p_peak_max=125e3,
)

I3_GAMMA = 9.665
