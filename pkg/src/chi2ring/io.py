"""CSV / JSON serialization of spectra, trajectories and fit results."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import IO, Any

import numpy as np

from .dynamics import Trajectory
from .model import Branch, Direction, DriveField, rad_to_ghz, ghz_to_rad
from .spectra import FrequencyGrid, Spectrum

SCHEMA_VERSION = 1


class DataFormatError(ValueError):
    """A spectrum file exists but cannot be parsed."""


def _num(x: float) -> str:
    return repr(float(x))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (Branch, Direction)):
        return value.value
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def dumps(obj: Any) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_text(text: str, target: str | Path | IO[str] | None, stream: IO[str]) -> None:
    if target is None or target == "-":
        stream.write(text)
        return
    if hasattr(target, "write"):
        target.write(text)
        return
    Path(target).write_text(text)


# ---------------------------------------------------------------------------
# spectra


def spectrum_to_csv(spectrum: Spectrum) -> str:
    """Columns ``probe_frequency_GHz, value`` plus ``real, imag`` when amplitudes exist."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    freq = rad_to_ghz(spectrum.omega)
    if spectrum.amplitudes is not None:
        w.writerow(["probe_frequency_GHz", "value", "real", "imag"])
        for f, v, a in zip(freq, spectrum.values, spectrum.amplitudes):
            w.writerow([_num(f), _num(v), _num(a.real), _num(a.imag)])
    else:
        w.writerow(["probe_frequency_GHz", "value"])
        for f, v in zip(freq, spectrum.values):
            w.writerow([_num(f), _num(v)])
    return buf.getvalue()


def read_spectrum_csv(path: str | Path, branch: Branch | str = Branch.NOIT,
                      probe_direction: Direction | str = Direction.CCW) -> Spectrum:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["probe_frequency_GHz", "value"]:
        raise DataFormatError(f"{path}: expected columns probe_frequency_GHz,value; got {header}")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != len(header):
        raise DataFormatError(f"{path}: need at least two complete data rows")
    try:
        grid = FrequencyGrid.from_omega(ghz_to_rad(data[:, 0]))
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    amps = None
    if len(header) >= 4 and header[2:4] == ["real", "imag"]:
        amps = data[:, 2] + 1j * data[:, 3]
    return Spectrum(grid, data[:, 1], Branch.parse(branch), Direction.parse(probe_direction),
                    amplitudes=amps, provenance="loaded", metadata={"source": str(path)})


def spectrum_to_dict(spectrum: Spectrum) -> dict[str, Any]:
    drive = None
    if spectrum.drive is not None:
        d = spectrum.drive
        drive = {"power_mw": d.power * 1e3, "frequency_thz": rad_to_ghz(d.omega) * 1e-3,
                 "direction": d.direction.value}
    meta = {
        "branch": spectrum.branch.value,
        "probe_direction": spectrum.probe_direction.value,
        "provenance": spectrum.provenance,
        "drive": drive,
        "grid": {"center_ghz": rad_to_ghz(spectrum.grid.center),
                 "span_ghz": rad_to_ghz(spectrum.grid.span),
                 "points": int(spectrum.grid.points)},
        "extra": dict(spectrum.metadata),
    }
    data = {"probe_frequency_GHz": rad_to_ghz(spectrum.omega), "value": spectrum.values}
    if spectrum.amplitudes is not None:
        data["real"] = spectrum.amplitudes.real
        data["imag"] = spectrum.amplitudes.imag
    return {"schema_version": SCHEMA_VERSION, "metadata": meta, "data": data}


def spectrum_to_json(spectrum: Spectrum) -> str:
    return dumps(spectrum_to_dict(spectrum))


def spectrum_from_dict(obj: dict[str, Any]) -> Spectrum:
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported spectrum schema_version {obj.get('schema_version')!r}")
    meta, data = obj["metadata"], obj["data"]
    grid = FrequencyGrid.from_omega(ghz_to_rad(np.asarray(data["probe_frequency_GHz"], dtype=float)))
    amps = None
    if "real" in data and "imag" in data:
        amps = np.asarray(data["real"], dtype=float) + 1j * np.asarray(data["imag"], dtype=float)
    drive = None
    if meta.get("drive"):
        d = meta["drive"]
        drive = DriveField(d["power_mw"] * 1e-3, ghz_to_rad(d["frequency_thz"] * 1e3), d["direction"])
    return Spectrum(grid, np.asarray(data["value"], dtype=float), meta["branch"],
                    meta["probe_direction"], amplitudes=amps, drive=drive,
                    provenance="loaded", metadata=dict(meta.get("extra") or {}))


def read_spectrum(path: str | Path, branch: Branch | str = Branch.NOIT,
                  probe_direction: Direction | str = Direction.CCW) -> Spectrum:
    """Load a spectrum from ``.json`` (full metadata) or CSV."""
    path = Path(path)
    if path.suffix.lower() != ".json":
        return read_spectrum_csv(path, branch, probe_direction)
    text = path.read_text()
    try:
        return spectrum_from_dict(json.loads(text))
    except DataFormatError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# trajectories


def trajectory_to_csv(trajectory: Trajectory) -> str:
    """Columns ``time_ns`` then ``<mode>_re, <mode>_im`` for each mode."""
    labels = sorted(trajectory.amplitudes)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_ns"] + [f"{m}_{part}" for m in labels for part in ("re", "im")])
    cols = [trajectory.amplitudes[m] for m in labels]
    for i, t in enumerate(trajectory.times):
        row = [_num(t * 1e9)]
        for col in cols:
            row += [_num(col[i].real), _num(col[i].imag)]
        w.writerow(row)
    return buf.getvalue()
