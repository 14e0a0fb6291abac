import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chi2ring.model import (
    HBAR,
    TWO_PI,
    Branch,
    CouplingState,
    Direction,
    DriveField,
    ModeParams,
    ProbeContext,
    SystemConfig,
    calibrate_g,
    cooperativity,
    detunings,
    effective_coupling,
    ghz_to_rad,
    loaded_q,
    momentum_matched,
    pump_photon_number,
    wavelength_to_omega,
)

from conftest import make_system

# Hand arithmetic for lambda = 1550 nm, Q_a = 1.8e5, P = 13.3 mW, kappa_a1 = kappa_a / 2,
# on resonance: n_a = 2 kappa_a1 (P / hbar w) / kappa_a^2 = P / (hbar w kappa_a).
GOLDEN_N_A = 30742574.538068406


def test_mode_validation():
    with pytest.raises(ValueError):
        ModeParams("b", 1.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        ModeParams("b", 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        ModeParams("b", 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ModeParams("x", 1.0, 1.0, 1.0)


def test_system_rejects_duplicate_labels_and_negative_g():
    s = make_system()
    with pytest.raises(ValueError):
        SystemConfig(s.mode_a, s.mode_a, s.mode_c)
    with pytest.raises(ValueError):
        s.with_g(-1.0)


def test_frequency_mismatch_computable():
    s = make_system()
    assert s.frequency_mismatch == pytest.approx(0.0, abs=1.0)


@pytest.mark.parametrize(
    "freq, kappa_ghz, expected",
    [(193.4e12, 0.46, 193.4e12 / (2 * 0.46e9)), (387e12, 1.84, 387e12 / (2 * 1.84e9))],
)
def test_loaded_q_examples(freq, kappa_ghz, expected):
    m = ModeParams.from_linewidth("c", TWO_PI * freq, ghz_to_rad(kappa_ghz), 0.5)
    assert loaded_q(m) == pytest.approx(expected, rel=1e-12)


def test_loaded_q_rounded_values():
    c = ModeParams.from_linewidth("c", TWO_PI * 193.4e12, ghz_to_rad(0.46), 0.5)
    b = ModeParams.from_linewidth("b", TWO_PI * 387e12, ghz_to_rad(1.84), 0.5)
    assert round(loaded_q(c) / 1e4) == 21
    assert loaded_q(b) == pytest.approx(1.05e5, rel=0.01)


def test_loaded_q_homogeneity():
    m = ModeParams("a", 1e15, 1e9, 2e9)
    m2 = ModeParams("a", 1e15, 2e9, 4e9)
    assert loaded_q(m2) == pytest.approx(loaded_q(m) / 2, rel=1e-15)


def test_from_q_round_trip():
    m = ModeParams.from_q("a", wavelength_to_omega(1550e-9), 1.8e5, 0.5)
    assert loaded_q(m) == pytest.approx(1.8e5, rel=1e-12)
    assert m.kappa0 == pytest.approx(m.kappa1, rel=1e-15)


def test_detunings_zero_at_triple_resonance():
    s = make_system()
    d = DriveField.on_resonance(s, 0.01)
    db, dc = detunings(s, d, ProbeContext(Branch.NOIT, s.mode_b.omega0))
    assert db == 0.0
    assert dc == pytest.approx(0.0, abs=1.0)


def test_detunings_noit_offset():
    s = make_system()
    d = DriveField.on_resonance(s, 0.01)
    delta = ghz_to_rad(0.3)
    db, dc = detunings(s, d, ProbeContext(Branch.NOIT, s.mode_b.omega0 + delta))
    assert db == pytest.approx(-delta, rel=1e-6)
    assert dc == pytest.approx(-delta, rel=1e-6)


def test_detunings_conversion_drive_offset():
    s = make_system()
    eps = ghz_to_rad(0.2)
    d = DriveField.on_resonance(s, 0.01, detuning=eps)  # omega = omega_a0 - eps
    db, dc = detunings(s, d, ProbeContext(Branch.CONVERSION, s.mode_c.omega0))
    assert dc == 0.0
    assert db == pytest.approx(eps, rel=1e-6)
    d2 = DriveField(0.01, s.mode_a.omega0 + eps)
    db2, _ = detunings(s, d2, ProbeContext(Branch.CONVERSION, s.mode_c.omega0))
    assert db2 == pytest.approx(-eps, rel=1e-6)


def test_noit_detunings_equal_over_grid():
    s = make_system()
    d = DriveField.on_resonance(s, 0.01)
    w = s.mode_b.omega0 + np.linspace(-5, 5, 101) * s.mode_b.kappa
    db, dc = detunings(s, d, ProbeContext(Branch.NOIT, w))
    np.testing.assert_allclose(db, dc, rtol=0, atol=1e-3 * s.mode_c.kappa)


def test_pump_photon_number_zero_and_linear():
    s = make_system()
    assert pump_photon_number(s, DriveField.on_resonance(s, 0.0)) == 0.0
    n1 = pump_photon_number(s, DriveField.on_resonance(s, 1e-3))
    n2 = pump_photon_number(s, DriveField.on_resonance(s, 2e-3))
    assert n2 == pytest.approx(2 * n1, rel=1e-14)


def test_pump_photon_number_golden():
    w = wavelength_to_omega(1550e-9)
    a = ModeParams.from_q("a", w, 1.8e5, 0.5)
    s = make_system()
    s = SystemConfig(a, s.mode_b, s.mode_c, 0.0)
    n = pump_photon_number(s, DriveField(13.3e-3, w))
    assert n == pytest.approx(GOLDEN_N_A, rel=1e-12)
    # second route: n = P / (hbar w kappa_a) with kappa_a = w / (2 Q)
    assert n == pytest.approx(13.3e-3 / (HBAR * w * (w / 3.6e5)), rel=1e-12)


def test_counter_propagating_probe_sees_no_coupling():
    s = make_system().with_g(1e6)
    d = DriveField.on_resonance(s, 0.05, Direction.CCW)
    cs = effective_coupling(s, d, Direction.CW)
    assert cs.G_mag == 0.0 and cs.C == 0.0
    assert cs.n_a > 0


def test_zero_g_gives_zero_cooperativity():
    s = make_system()
    cs = effective_coupling(s, DriveField.on_resonance(s, 0.05), "ccw")
    assert cs.C == 0.0


def test_golden_cooperativity():
    s = make_system(1.84, 0.46)
    c = cooperativity(ghz_to_rad(0.72), s.mode_b, s.mode_c)
    assert c == pytest.approx(0.72**2 / (1.84 * 0.46), rel=1e-12)
    assert round(c, 3) == 0.612


def test_calibration_examples():
    s = make_system()
    ref = DriveField.on_resonance(s, 1e-3)
    s = s.with_g(calibrate_g(s, 35.0, ref))
    assert effective_coupling(s, ref, "ccw").C == pytest.approx(0.035, rel=1e-12)
    c175 = effective_coupling(s, ref.with_power(17.5e-3), "ccw").C
    assert c175 == pytest.approx(0.6125, rel=1e-12)


@pytest.mark.parametrize("target", [0.0, -1.0])
def test_calibration_rejects_non_positive(target):
    s = make_system()
    with pytest.raises(ValueError):
        calibrate_g(s, target, DriveField.on_resonance(s, 1e-3))


def test_calibration_rejects_zero_reference_power():
    s = make_system()
    with pytest.raises(ValueError):
        calibrate_g(s, 35.0, DriveField.on_resonance(s, 0.0))


@pytest.mark.parametrize("ms, expected", [((100, 250, 150), True), ((100, 251, 150), False),
                                          ((250, 100, 150), False)])
def test_momentum_matched(ms, expected):
    s = make_system()
    a, b, c = (ModeParams(x.label, x.omega0, x.kappa0, x.kappa1, m)
               for x, m in zip((s.mode_a, s.mode_b, s.mode_c), ms))
    assert momentum_matched(SystemConfig(a, b, c)) is expected


def test_bundled_system_is_momentum_matched(bundled_system):
    assert momentum_matched(bundled_system)


rate = st.floats(min_value=1e6, max_value=1e11)


@settings(max_examples=200, deadline=None)
@given(kb=rate, kc=rate, G=rate, lam=st.floats(min_value=1e-3, max_value=1e3))
def test_cooperativity_scale_invariant(kb, kc, G, lam):
    b = ModeParams("b", 1e15, kb / 2, kb / 2)
    c = ModeParams("c", 1e15, kc / 2, kc / 2)
    b2 = ModeParams("b", 1e15, lam * kb / 2, lam * kb / 2)
    c2 = ModeParams("c", 1e15, lam * kc / 2, lam * kc / 2)
    assert cooperativity(lam * G, b2, c2) == pytest.approx(cooperativity(G, b, c), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(p1=st.floats(min_value=0, max_value=1.0), p2=st.floats(min_value=0, max_value=1.0),
       detune=st.floats(min_value=-5e9, max_value=5e9))
def test_coupling_monotone_in_power(p1, p2, detune):
    s = make_system().with_g(7e5)
    lo, hi = sorted((p1, p2))
    d = DriveField.on_resonance(s, lo, detuning=detune)
    assert effective_coupling(s, d, "ccw").G_mag <= effective_coupling(s, d.with_power(hi), "ccw").G_mag
    assert effective_coupling(s, d.with_power(hi), "cw").G_mag == 0.0


@settings(max_examples=100, deadline=None)
@given(target=st.floats(min_value=1e-2, max_value=1e4), power=st.floats(min_value=1e-5, max_value=1.0),
       detune=st.floats(min_value=-5e9, max_value=5e9))
def test_calibration_round_trip(target, power, detune):
    s = make_system()
    ref = DriveField.on_resonance(s, power, detuning=detune)
    s = s.with_g(calibrate_g(s, target, ref))
    c = effective_coupling(s, ref, ref.direction).C
    assert abs(c / power - target) / target < 1e-12


def test_coupling_state_invariant():
    s = make_system().with_g(7e5)
    cs = effective_coupling(s, DriveField.on_resonance(s, 0.01), "ccw")
    assert isinstance(cs, CouplingState)
    assert cs.C == cs.G_mag**2 / (s.mode_b.kappa * s.mode_c.kappa)
    assert cs.G_mag == pytest.approx(7e5 * math.sqrt(cs.n_a), rel=1e-15)
