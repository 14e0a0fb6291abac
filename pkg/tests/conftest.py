import numpy as np
import pytest

from chi2ring.config import build_system, load_config
from chi2ring.model import TWO_PI, DriveField, ModeParams, SystemConfig


@pytest.fixture(scope="session")
def bundled_cfg():
    return load_config("paper")


@pytest.fixture(scope="session")
def bundled_system(bundled_cfg):
    return build_system(bundled_cfg)


def make_system(kb=1.84, kc=0.46, rb=0.5, rc=0.5, g=0.0, ka=1.0756, ra=0.5):
    """Triply resonant system with linewidths in GHz (over 2 pi)."""
    wa, wc = TWO_PI * 193.6e12, TWO_PI * 193.4e12
    a = ModeParams.from_linewidth("a", wa, TWO_PI * ka * 1e9, ra, 244)
    b = ModeParams.from_linewidth("b", wa + wc, TWO_PI * kb * 1e9, rb, 487)
    c = ModeParams.from_linewidth("c", wc, TWO_PI * kc * 1e9, rc, 243)
    return SystemConfig(a, b, c, g)


def drive_for_cooperativity(system, C, direction="ccw"):
    """Resonant drive whose power gives cooperativity ``C`` (system needs g > 0)."""
    from chi2ring.model import effective_coupling

    ref = DriveField.on_resonance(system, 1e-3, direction)
    per_watt = effective_coupling(system, ref, direction).C / 1e-3
    return ref.with_power(C / per_watt)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
