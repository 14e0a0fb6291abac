import io
import json
import subprocess
import sys

import numpy as np
import pytest

from chi2ring.cli import run
from chi2ring.config import ConfigError, RunConfig, build_system, load_config
from chi2ring.dynamics import LinearInputs, evolve_linearized
from chi2ring.io import (
    DataFormatError,
    read_spectrum,
    spectrum_from_dict,
    spectrum_to_csv,
    spectrum_to_dict,
    spectrum_to_json,
    trajectory_to_csv,
)
from chi2ring.model import TWO_PI, Branch, DriveField, effective_coupling, loaded_q
from chi2ring.spectra import default_grid, extract_noit_features, sweep_conversion, sweep_noit

from conftest import drive_for_cooperativity


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def _csv_values(text):
    rows = text.strip().splitlines()
    assert rows[0].startswith("probe_frequency_GHz,value")
    return np.array([[float(x) for x in r.split(",")] for r in rows[1:]])


# ---------------------------------------------------------------------------
# config


def test_bundled_config(bundled_cfg, bundled_system):
    assert bundled_cfg.kappa_b_over_2pi_ghz == 1.84
    assert bundled_cfg.kappa_c_over_2pi_ghz == 0.46
    assert bundled_cfg.unit_power_cooperativity_per_mw == 0.035
    assert bundled_system.mode_b.kappa == pytest.approx(TWO_PI * 1.84e9)
    assert loaded_q(bundled_system.mode_a) == pytest.approx(1.8e5)
    assert bundled_system.mode_b.external_fraction * bundled_system.mode_c.external_fraction == \
        pytest.approx(0.14)
    ref = DriveField.on_resonance(bundled_system, 1e-3)
    assert effective_coupling(bundled_system, ref, "ccw").C == pytest.approx(0.035, rel=1e-12)
    assert load_config("paper.json") == bundled_cfg


@pytest.mark.parametrize("changes", [
    {"g_over_2pi_hz": 1e5},                            # both coupling sources given
    {"unit_power_cooperativity_per_mw": None},         # neither given
    {"grid_points": 1},
    {"kappa_b_over_2pi_ghz": None},                    # no linewidth for b
    {"probe_direction": "up"},
    {"schema_version": 2},
    {"bogus_key": 1},
])
def test_config_validation(bundled_cfg, changes):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**bundled_cfg.to_dict(), **changes})


def test_config_q_alternative(bundled_cfg):
    cfg = RunConfig.from_dict({**bundled_cfg.to_dict(), "kappa_b_over_2pi_ghz": None, "q_b_loaded": 1.0e5})
    assert loaded_q(build_system(cfg).mode_b) == pytest.approx(1.0e5)


def test_config_file_round_trip(tmp_path, bundled_cfg):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(bundled_cfg.to_dict()))
    assert load_config(p) == bundled_cfg
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.json")


# ---------------------------------------------------------------------------
# serialization


def test_csv_round_trip(tmp_path, bundled_system):
    sp = sweep_noit(bundled_system, DriveField.on_resonance(bundled_system, 0.0133),
                    default_grid(bundled_system, "noit", 501))
    p = tmp_path / "s.csv"
    p.write_text(spectrum_to_csv(sp))
    back = read_spectrum(p)
    np.testing.assert_array_equal(back.values, sp.values)
    np.testing.assert_array_equal(back.amplitudes, sp.amplitudes)
    np.testing.assert_allclose(back.omega, sp.omega, rtol=1e-15)
    assert back.provenance == "loaded"


def test_json_round_trip(tmp_path, bundled_system):
    drive = DriveField.on_resonance(bundled_system, 0.0133)
    sp = sweep_conversion(bundled_system, drive, default_grid(bundled_system, "conversion", 301))
    p = tmp_path / "s.json"
    p.write_text(spectrum_to_json(sp))
    back = read_spectrum(p)
    assert back.branch is Branch.CONVERSION
    np.testing.assert_array_equal(back.values, sp.values)
    assert back.drive.power == pytest.approx(drive.power)
    assert back.metadata["C"] == sp.metadata["C"]
    assert spectrum_to_dict(back)["schema_version"] == 1
    with pytest.raises(DataFormatError):
        spectrum_from_dict({**spectrum_to_dict(sp), "schema_version": 9})


@pytest.mark.parametrize("text", ["", "a,b\n1,2\n3,4\n", "probe_frequency_GHz,value\n1,x\n2,3\n",
                                  "probe_frequency_GHz,value\n1,2\n"])
def test_bad_csv(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataFormatError):
        read_spectrum(p)


def test_trajectory_csv(bundled_system):
    tr = evolve_linearized(bundled_system, 0.0, LinearInputs(1.0), 1e-10, 1e-12, record_every=10)
    rows = trajectory_to_csv(tr).splitlines()
    assert rows[0] == "time_ns,b_re,b_im,c_re,c_im"
    assert len(rows) == len(tr.times) + 1
    assert float(rows[-1].split(",")[0]) == pytest.approx(0.1)


# ---------------------------------------------------------------------------
# command line


def test_simulate_noit_transparency():
    code, out, _ = cli("simulate-noit", "--config", "paper.json", "--power-mw", "13.3", "--direction", "ccw")
    assert code == 0
    data = _csv_values(out)
    assert data.shape == (4001, 4)
    y = data[:, 1]
    minima = np.flatnonzero((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])) + 1
    assert len(minima) == 2
    assert y[len(y) // 2] > y[minima].max()


def test_counter_propagating_equals_zero_power():
    _, cw, _ = cli("simulate-noit", "--power-mw", "13.3", "--direction", "cw")
    _, zero, _ = cli("simulate-noit", "--power-mw", "0")
    assert cw == zero


def test_outputs_byte_identical():
    args = ("simulate-noit", "--power-mw", "13.3", "--noise", "0.01", "--seed", "7", "--points", "501")
    assert cli(*args)[1] == cli(*args)[1]
    assert cli(*args)[1] != cli(*args[:-3], "8", "--points", "501")[1]


def test_fit_round_trip(tmp_path, bundled_system):
    data = tmp_path / "data.csv"
    code, _, _ = cli("simulate-noit", "--power-mw", "13.3", "--noise", "0.01", "--seed", "3", "-o", str(data))
    assert code == 0
    code, out, _ = cli("fit", "--model", "noit", str(data))
    assert code == 0
    result = json.loads(out)
    truth = 0.035 * 13.3
    assert result["schema_version"] == 1
    assert abs(result["estimates"]["C"] - truth) / truth < 0.05


def test_fit_with_linear_losses(tmp_path):
    cold, hot, lin = tmp_path / "cold.json", tmp_path / "hot.csv", tmp_path / "lin.json"
    assert cli("simulate-noit", "--power-mw", "0", "--format", "json", "-o", str(cold))[0] == 0
    assert cli("simulate-noit", "--power-mw", "5", "-o", str(hot))[0] == 0
    assert cli("fit", "--model", "lorentzian", str(cold), "-o", str(lin))[0] == 0
    code, out, _ = cli("fit", "--model", "noit", "--linear-from", str(lin), str(hot))
    assert code == 0
    result = json.loads(out)
    assert "kappa_b0" in result["fixed"]
    assert result["estimates"]["C"] == pytest.approx(0.175, rel=1e-6)


def test_fit_fix_in_ghz(tmp_path):
    hot = tmp_path / "hot.csv"
    cli("simulate-noit", "--power-mw", "10", "-o", str(hot))
    code, out, _ = cli("fit", "--model", "noit", "--fix", "kappa_c=0.46", str(hot))
    assert code == 0
    r = json.loads(out)
    assert r["estimates_over_2pi_ghz"]["kappa_c"] == pytest.approx(0.46, rel=1e-12)
    assert r["estimates"]["C"] == pytest.approx(0.35, rel=1e-6)


def test_fit_conversion_cli(tmp_path):
    conv = tmp_path / "conv.csv"
    cli("simulate-conversion", "--power-mw", "13.3", "-o", str(conv))
    code, out, _ = cli("fit", "--model", "conversion", "--coupling-product", "0.14", str(conv))
    assert code == 0
    assert json.loads(out)["estimates"]["C"] == pytest.approx(0.4655, rel=1e-6)
    code, out, _ = cli("fit", "--model", "conversion", str(conv))
    assert code == 0
    assert "degenerate" in json.loads(out)["flags"]


def test_power_series(tmp_path):
    code, out, _ = cli("power-series", "--powers-mw", "0", "5", "13.3", "--points", "1001",
                       "--output-dir", str(tmp_path / "ps"))
    assert code == 0
    summary = json.loads(out)
    rows = summary["spectra"]
    assert [r["power_mw"] for r in rows] == [0, 5, 13.3]
    assert rows[0]["flat"] and not rows[2]["flat"]
    assert rows[1]["peak_height"] < rows[2]["peak_height"]
    assert (tmp_path / "ps" / "summary.json").read_text() == out
    assert all((tmp_path / "ps" / r["file"]).exists() for r in rows)
    code, out, _ = cli("power-series", "--branch", "conversion", "--powers-mw", "5", "13.3")
    widths = [r["fwhm_ghz"] for r in json.loads(out)["spectra"]]
    assert widths[0] < widths[1]


def test_dynamics_report(tmp_path):
    traj = tmp_path / "t.csv"
    code, out, _ = cli("dynamics", "--detunings", "5", "--lifetimes", "20", "--trajectory-csv", str(traj))
    assert code == 0
    rep = json.loads(out)
    assert rep["noit"]["max_relative_error"] < 1e-6
    assert rep["conversion"]["max_relative_error"] < 1e-6
    assert 14 <= rep["rk4_order_check"]["ratio"] <= 18
    assert traj.read_text().startswith("time_ns,b_re,b_im,c_re,c_im")


def test_calibrate():
    code, out, _ = cli("calibrate", "--slope-per-mw", "0.035")
    assert code == 0
    rep = json.loads(out)
    assert rep["operating_points"][0]["C"] == pytest.approx(0.035 * 13.3, rel=1e-12)
    _, out2, _ = cli("calibrate")
    assert json.loads(out2)["g_rad_per_s"] == rep["g_rad_per_s"]


def test_exit_codes(tmp_path):
    assert cli()[0] == 1
    assert cli("bogus")[0] == 1
    assert cli("simulate-noit", "--power-mw", "-1")[0] == 1
    assert cli("simulate-noit", "--config", str(tmp_path / "nope.json"))[0] == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli("simulate-noit", "--config", str(bad))[0] == 1
    assert cli("fit", "--model", "noit", str(tmp_path / "none.csv"))[0] == 3
    garbage = tmp_path / "garbage.csv"
    garbage.write_text("hello\n")
    code, _, err = cli("fit", "--model", "noit", str(garbage))
    assert code == 3 and "I/O error" in err
    good = tmp_path / "good.csv"
    cli("simulate-noit", "--points", "201", "-o", str(good))
    assert cli("fit", "--model", "noit", "--fix", "C", str(good))[0] == 1
    flat = tmp_path / "flat.csv"
    flat.write_text("probe_frequency_GHz,value\n" + "".join(f"{387000 + i * 0.01!r},1.0\n" for i in range(50)))
    assert cli("fit", "--model", "lorentzian", str(flat))[0] == 2
    assert cli("simulate-noit", "-o", str(tmp_path / "missing" / "x.csv"))[0] == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "chi2ring", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("chi2ring ")


def test_transparency_features_from_cli_match_library(bundled_system):
    _, out, _ = cli("simulate-noit", "--power-mw", "13.3", "--points", "2001")
    y = _csv_values(out)[:, 1]
    drive = drive_for_cooperativity(bundled_system, 0.035 * 13.3)
    sp = sweep_noit(bundled_system, drive, default_grid(bundled_system, "noit", 2001))
    np.testing.assert_allclose(y, sp.values, rtol=1e-12)
    assert not extract_noit_features(sp).flat
