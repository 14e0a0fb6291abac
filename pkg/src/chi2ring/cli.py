"""
Command-line front end.

Exit codes: 0 success, 1 usage/configuration error, 2 numerical failure
(non-convergence, integration blow-up), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, build_drive, build_system, load_config
from .dynamics import (
    MAX_STEP_FRACTION,
    IntegrationError,
    LinearInputs,
    depletion_scan,
    evolve_linearized,
    linear_max_rate,
    ringup_comparison,
    rk4_error_ratio,
)
from .fitting import (
    NoiseSpec,
    add_noise,
    fit_conversion,
    fit_lorentzian,
    fit_noit,
)
from .io import DataFormatError, dumps, read_spectrum, spectrum_to_csv, spectrum_to_json, trajectory_to_csv, write_text
from .model import (
    Branch,
    ProbeContext,
    SystemConfig,
    detunings,
    effective_coupling,
    ghz_to_rad,
    pump_photon_number,
    rad_to_ghz,
)
from .spectra import (
    FeatureError,
    FrequencyGrid,
    Spectrum,
    default_grid,
    extract_fwhm,
    extract_noit_features,
    power_series,
    sweep_conversion,
    sweep_noit,
)
from .steady_state import max_external_efficiency, coupling_ratio_product

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# shared helpers


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "power_mw", None) is not None:
        changes["drive_powers_mw"] = [args.power_mw]
    if getattr(args, "powers_mw", None):
        changes["drive_powers_mw"] = list(args.powers_mw)
    for flag, key in (("direction", "probe_direction"), ("drive_direction", "drive_direction"),
                      ("drive_detuning_ghz", "drive_detuning_over_2pi_ghz"),
                      ("span_ghz", "grid_span_over_2pi_ghz"), ("points", "grid_points"),
                      ("noise", "noise_level"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = value
    return cfg.updated(**changes)


def _grid(cfg: RunConfig, system: SystemConfig, branch: Branch) -> FrequencyGrid:
    grid = default_grid(system, branch, cfg.grid_points)
    if cfg.grid_span_over_2pi_ghz is not None:
        grid = FrequencyGrid(grid.center, ghz_to_rad(cfg.grid_span_over_2pi_ghz), cfg.grid_points)
    return grid


def _emit_spectrum(spectrum: Spectrum, args, stdout: IO[str]) -> None:
    text = spectrum_to_json(spectrum) if args.format == "json" else spectrum_to_csv(spectrum)
    write_text(text, args.output, stdout)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default="paper",
                   help="JSON config path or bundled name (default: paper)")
    p.add_argument("-o", "--output", default=None, help="output file (default: stdout)")
    p.add_argument("--seed", type=int, default=None)


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--power-mw", type=float, default=None, help="drive power [mW]")
    p.add_argument("--direction", choices=["cw", "ccw"], default=None,
                   help="probe propagation direction")
    p.add_argument("--drive-direction", choices=["cw", "ccw"], default=None)
    p.add_argument("--drive-detuning-ghz", type=float, default=None,
                   help="omega_a0 - omega_drive over 2 pi [GHz]")
    p.add_argument("--span-ghz", type=float, default=None, help="grid span over 2 pi [GHz]")
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--noise", type=float, default=None,
                   help="relative multiplicative noise level")
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def _simulate(args, branch: Branch, stdout: IO[str]) -> int:
    cfg = _config(args)
    system = build_system(cfg)
    drive = build_drive(cfg, system)
    grid = _grid(cfg, system, branch)
    if branch is Branch.NOIT:
        spectrum = sweep_noit(system, drive, grid, cfg.probe_direction)
    else:
        spectrum = sweep_conversion(system, drive, grid, cfg.probe_direction)
    spectrum = add_noise(spectrum, NoiseSpec(cfg.noise_level, cfg.seed))
    _emit_spectrum(spectrum, args, stdout)
    return EXIT_OK


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate_noit(args, stdout, stderr) -> int:
    return _simulate(args, Branch.NOIT, stdout)


def cmd_simulate_conversion(args, stdout, stderr) -> int:
    return _simulate(args, Branch.CONVERSION, stdout)


def cmd_power_series(args, stdout, stderr) -> int:
    cfg = _config(args)
    branch = Branch.parse(args.branch)
    system = build_system(cfg)
    drive = build_drive(cfg, system)
    grid = _grid(cfg, system, branch)
    powers = [p * 1e-3 for p in cfg.drive_powers_mw]
    spectra = power_series(system, powers, grid, branch, drive, cfg.probe_direction)
    streams = np.random.SeedSequence(cfg.seed).spawn(len(spectra))
    out_dir = Path(args.output_dir) if args.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (p_mw, spec, stream) in enumerate(zip(cfg.drive_powers_mw, spectra, streams)):
        spec = add_noise(spec, NoiseSpec(cfg.noise_level, stream))
        row = {"power_mw": p_mw, "C": spec.metadata["C"]}
        if branch is Branch.NOIT:
            f = extract_noit_features(spec)
            row.update(dip_min=f.dip_min, center_T=f.center_T, peak_height=f.peak_height,
                       peak_width_ghz=rad_to_ghz(f.peak_width), flat=f.flat)
        else:
            row["peak_efficiency"] = float(np.max(spec.values))
            try:
                row["fwhm_ghz"] = rad_to_ghz(extract_fwhm(spec))
            except FeatureError:
                row["fwhm_ghz"] = None
        if out_dir is not None:
            name = f"{branch.value}_{i:02d}_{p_mw:g}mW.{args.format}"
            text = spectrum_to_json(spec) if args.format == "json" else spectrum_to_csv(spec)
            (out_dir / name).write_text(text)
            row["file"] = name
        rows.append(row)
    summary = {"schema_version": 1, "branch": branch.value, "spectra": rows}
    text = dumps(summary)
    if out_dir is not None:
        (out_dir / "summary.json").write_text(text)
    write_text(text, args.output, stdout)
    return EXIT_OK


def _parse_fixed(items: Sequence[str]) -> dict[str, float]:
    """``NAME=VALUE`` pairs; rates and frequencies in GHz (over 2 pi)."""
    rate_like = {"kappa0", "kappa1", "kappa_b0", "kappa_b1", "kappa_b", "kappa_c", "center",
                 "two_photon_offset"}
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--fix expects NAME=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        try:
            v = float(value)
        except ValueError:
            raise UsageError(f"--fix {name}: not a number: {value!r}") from None
        out[name.strip()] = ghz_to_rad(v) if name.strip() in rate_like else v
    return out


def cmd_fit(args, stdout, stderr) -> int:
    spectrum = read_spectrum(args.data, branch=("conversion" if args.model == "conversion" else "noit"),
                             probe_direction=args.direction or "ccw")
    fixed = _parse_fixed(args.fix)
    if args.linear_from:
        try:
            est = json.loads(Path(args.linear_from).read_text()).get("estimates", {})
        except (ValueError, AttributeError) as exc:
            raise DataFormatError(f"{args.linear_from}: {exc}") from None
        if "kappa0" not in est or "kappa1" not in est:
            raise UsageError(f"{args.linear_from}: not a Lorentzian fit result")
        fixed.setdefault("kappa_b0", est["kappa0"])
        fixed.setdefault("kappa_b1", est["kappa1"])
    if args.coupling_product is not None:
        fixed["coupling_product"] = args.coupling_product
    if args.model == "lorentzian":
        result = fit_lorentzian(spectrum, fixed=fixed)
    elif args.model == "noit":
        result = fit_noit(spectrum, fixed=fixed)
    else:
        result = fit_conversion(spectrum, fixed=fixed)
    write_text(dumps(result.to_dict()), args.output, stdout)
    if result.status != "converged":
        stderr.write(f"fit did not converge: status={result.status} {result.message}\n")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_dynamics(args, stdout, stderr) -> int:
    cfg = _config(args)
    system = build_system(cfg)
    drive = build_drive(cfg, system)
    kb = system.mode_b.kappa
    offsets = np.linspace(-2.0, 2.0, args.detunings) * kb
    report = {"schema_version": 1, "drive_power_mw": drive.power * 1e3,
              "lifetimes": args.lifetimes}
    coupling = effective_coupling(system, drive, drive.direction)
    report["C"] = coupling.C
    for branch in (Branch.NOIT, Branch.CONVERSION):
        center = system.mode_b.omega0 if branch is Branch.NOIT else system.mode_c.omega0
        cmp = ringup_comparison(system, drive, center + offsets, branch, args.lifetimes)
        report[branch.value] = {"max_relative_error": cmp.max_relative_error,
                                "probe_offset_ghz": rad_to_ghz(offsets),
                                "time_domain": cmp.time_domain, "closed_form": cmp.closed_form}
    dt = 0.08 / linear_max_rate(system, coupling.G_mag)
    e1, e2 = rk4_error_ratio(system, coupling.G_mag, dt, 5.0 / system.mode_c.kappa, 0.5 * kb, 0.3 * kb)
    report["rk4_order_check"] = {"error_dt": e1, "error_dt_half": e2, "ratio": e1 / e2}
    if args.depletion:
        scan = depletion_scan(system, drive, [1e-6, 1e-4, 1e-2, 0.1, 0.3, 1.0])
        report["depletion_scan"] = [{"probe_to_drive_flux": r, "relative_deviation": d}
                                    for r, d in scan]
    if args.trajectory_csv:
        db, dc = detunings(system, drive, ProbeContext(Branch.NOIT, system.mode_b.omega0))
        step = 0.5 * MAX_STEP_FRACTION / linear_max_rate(system, coupling.G_mag)
        traj = evolve_linearized(system, coupling, LinearInputs(1.0, 0.0, db, dc),
                                 args.lifetimes / min(kb, system.mode_c.kappa), step)
        Path(args.trajectory_csv).write_text(trajectory_to_csv(traj))
    write_text(dumps(report), args.output, stdout)
    return EXIT_OK


def cmd_calibrate(args, stdout, stderr) -> int:
    cfg = load_config(args.config)
    if args.slope_per_mw is not None:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "g_over_2pi_hz": None,
                                   "unit_power_cooperativity_per_mw": args.slope_per_mw})
    if cfg.unit_power_cooperativity_per_mw is None:
        raise UsageError("config gives g directly; pass --slope-per-mw to calibrate")
    system = build_system(cfg)
    drive = build_drive(cfg, system, power_w=1e-3)
    n_per_mw = pump_photon_number(system, drive)
    powers = [p * 1e-3 for p in cfg.drive_powers_mw]
    report = {
        "schema_version": 1,
        "unit_power_cooperativity_per_mw": cfg.unit_power_cooperativity_per_mw,
        "g_rad_per_s": system.g,
        "g_over_2pi_hz": system.g / (2 * np.pi),
        "pump_photons_per_mw": n_per_mw,
        "coupling_ratio_product": coupling_ratio_product(system.mode_b, system.mode_c),
        "operating_points": [
            {"power_mw": p * 1e3,
             "C": (cs := effective_coupling(system, drive.with_power(p), drive.direction)).C,
             "G_over_2pi_ghz": rad_to_ghz(cs.G_mag),
             "eta_ext_max": max_external_efficiency(
                 coupling_ratio_product(system.mode_b, system.mode_c), cs.C)}
            for p in powers
        ],
    }
    write_text(dumps(report), args.output, stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chi2ring", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate-noit", help="transmission spectrum of the visible mode")
    _add_common(p)
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate_noit)

    p = sub.add_parser("simulate-conversion", help="telecom-to-visible conversion spectrum")
    _add_common(p)
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate_conversion)

    p = sub.add_parser("power-series", help="spectra and features over a list of drive powers")
    _add_common(p)
    _add_sim_flags(p)
    p.add_argument("--powers-mw", type=float, nargs="+", default=None)
    p.add_argument("--branch", choices=["noit", "conversion"], default="noit")
    p.add_argument("--output-dir", default=None, help="write one spectrum file per power here")
    p.set_defaults(func=cmd_power_series)

    p = sub.add_parser("fit", help="fit a spectrum file (CSV or JSON)")
    p.add_argument("data")
    p.add_argument("--model", choices=["lorentzian", "noit", "conversion"], required=True)
    p.add_argument("--fix", action="append", metavar="NAME=VALUE",
                   help="freeze a parameter; rates/frequencies in GHz (over 2 pi)")
    p.add_argument("--linear-from", default=None,
                   help="Lorentzian fit JSON whose kappa0/kappa1 are frozen as kappa_b0/kappa_b1")
    p.add_argument("--coupling-product", type=float, default=None)
    p.add_argument("--direction", choices=["cw", "ccw"], default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("dynamics", help="time-domain oracle comparison report")
    _add_common(p)
    p.add_argument("--power-mw", type=float, default=None)
    p.add_argument("--detunings", type=int, default=21)
    p.add_argument("--lifetimes", type=float, default=20.0)
    p.add_argument("--depletion", action="store_true",
                   help="also scan probe/drive flux ratio with the three-mode model")
    p.add_argument("--trajectory-csv", default=None)
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("calibrate", help="single-photon coupling g from C per mW")
    _add_common(p)
    p.add_argument("--slope-per-mw", type=float, default=None)
    p.set_defaults(func=cmd_calibrate)
    return parser


def run(argv: Sequence[str] | None = None, stdout: IO[str] | None = None,
        stderr: IO[str] | None = None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, stdout, stderr)
    except UsageError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except DataFormatError as exc:
        stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO
    except (IntegrationError, FeatureError, np.linalg.LinAlgError) as exc:
        stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
