from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from evratio.loss_model import LossCoefficients, OolCoefficients

DATA = Path(__file__).parent / "data"
WLTC_CSV = DATA / "wltc_class3b.csv"


def random_model(rng, with_d00=True):
    """Loss coefficients drawn from a box around the i3 fit."""
    c20 = rng.uniform(0.02, 0.1)
    d01 = rng.uniform(2.0, 30.0)
    d02 = rng.uniform(1e-4, 2e-3)
    d00 = rng.uniform(0.0, min(500.0, 0.2 * d01**2 / d02)) if with_d00 else 0.0
    c11 = rng.uniform(0.0, 0.05)
    return LossCoefficients(c00=d00 * c20, c01=d01 * c20, c02=d02 * c20, c11=c11, c20=c20)


@st.composite
def models(draw, with_d00=True):
    c20 = draw(st.floats(0.02, 0.1))
    d01 = draw(st.floats(3.0, 30.0))
    d02 = draw(st.floats(1e-4, 2e-3))
    d00 = draw(st.floats(0.0, 500.0)) if with_d00 else 0.0
    c11 = draw(st.floats(0.0, 0.05))
    return LossCoefficients(c00=d00 * c20, c01=d01 * c20, c02=d02 * c20, c11=c11, c20=c20)


@st.composite
def ool_coefficients(draw):
    d01 = draw(st.floats(3.0, 30.0))
    d02 = draw(st.floats(1e-4, 2e-3))
    d00 = draw(st.floats(0.0, 500.0))
    return OolCoefficients(d00, d01, d02)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
