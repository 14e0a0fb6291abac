"""Frequency sweeps of the steady-state response and spectral feature extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .model import (
    Branch,
    Direction,
    DriveField,
    ProbeContext,
    SystemConfig,
    detunings,
    effective_coupling,
)
from .steady_state import conversion_amplitude, conversion_efficiency, noit_amplitude

DEFAULT_POINTS = 4001
DEFAULT_SPAN_LINEWIDTHS = 10.0


class FeatureError(ValueError):
    """Raised when a spectral feature cannot be located on the grid."""


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of probe angular frequencies, ``center +/- span/2`` [rad/s]."""

    center: float
    span: float
    points: int = DEFAULT_POINTS

    def __post_init__(self) -> None:
        if int(self.points) != self.points or self.points < 2:
            raise ValueError(f"grid needs an integer number of points >= 2, got {self.points}")
        if not self.span > 0:
            raise ValueError(f"grid span must be positive, got {self.span}")

    @property
    def omega(self) -> np.ndarray:
        return self.center + np.linspace(-0.5 * self.span, 0.5 * self.span, int(self.points))

    @property
    def offsets(self) -> np.ndarray:
        """Probe frequency relative to the grid center [rad/s]."""
        return np.linspace(-0.5 * self.span, 0.5 * self.span, int(self.points))

    @property
    def step(self) -> float:
        return self.span / (self.points - 1)

    @classmethod
    def from_omega(cls, omega: np.ndarray, rtol: float = 1e-6) -> "FrequencyGrid":
        """Recover a grid from sampled frequencies, checking uniform increasing spacing."""
        omega = np.asarray(omega, dtype=float)
        if omega.size < 2:
            raise ValueError("need at least two frequency samples")
        steps = np.diff(omega)
        if np.any(steps <= 0):
            raise ValueError("frequencies must be strictly increasing")
        span = omega[-1] - omega[0]
        mean_step = span / (omega.size - 1)
        if np.max(np.abs(steps - mean_step)) > rtol * mean_step + 1e-12 * abs(omega[0]):
            raise ValueError("frequencies are not uniformly spaced")
        return cls(0.5 * (omega[0] + omega[-1]), span, omega.size)


def default_grid(system: SystemConfig, branch: Branch | str,
                 points: int = DEFAULT_POINTS) -> FrequencyGrid:
    """Span of ten times the widest full linewidth, centered on the probed mode."""
    branch = Branch.parse(branch)
    widest = 2.0 * max(system.mode_b.kappa, system.mode_c.kappa)
    center = system.mode_b.omega0 if branch is Branch.NOIT else system.mode_c.omega0
    return FrequencyGrid(center, DEFAULT_SPAN_LINEWIDTHS * widest, points)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """A swept response: ``values`` is |amplitude|^2 (transmission or efficiency)."""

    grid: FrequencyGrid
    values: np.ndarray
    branch: Branch
    probe_direction: Direction = Direction.CCW
    amplitudes: np.ndarray | None = None
    drive: DriveField | None = None
    provenance: str = "simulated"
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "branch", Branch.parse(self.branch))
        object.__setattr__(self, "probe_direction", Direction.parse(self.probe_direction))
        if values.shape != (self.grid.points,):
            raise ValueError(f"expected {self.grid.points} values, got shape {values.shape}")
        if self.amplitudes is not None:
            amps = np.asarray(self.amplitudes, dtype=complex)
            if amps.shape != values.shape:
                raise ValueError("amplitudes and values must have the same length")
            object.__setattr__(self, "amplitudes", amps)

    @property
    def omega(self) -> np.ndarray:
        return self.grid.omega

    def replace_values(self, values: np.ndarray, **changes) -> "Spectrum":
        kwargs = dict(grid=self.grid, values=values, branch=self.branch,
                      probe_direction=self.probe_direction, amplitudes=None,
                      drive=self.drive, provenance=self.provenance,
                      metadata=dict(self.metadata))
        kwargs.update(changes)
        return Spectrum(**kwargs)


def _drive_metadata(system: SystemConfig, drive: DriveField, coupling) -> dict[str, Any]:
    return {
        "drive_power_w": drive.power,
        "drive_omega": drive.omega,
        "drive_direction": drive.direction.value,
        "n_a": coupling.n_a,
        "G_mag": coupling.G_mag,
        "C": coupling.C,
        "g": system.g,
    }


def sweep_noit(system: SystemConfig, drive: DriveField, grid: FrequencyGrid,
               probe_direction: Direction | str = Direction.CCW) -> Spectrum:
    """Transmission of the visible probe across mode ``b``."""
    probe = ProbeContext(Branch.NOIT, grid.omega, probe_direction)
    coupling = effective_coupling(system, drive, probe.probe_direction)
    delta_b, delta_c = detunings(system, drive, probe)
    amps = noit_amplitude(system.mode_b, system.mode_c, coupling.G_mag, delta_b, delta_c)
    return Spectrum(grid, np.abs(amps) ** 2, Branch.NOIT, probe.probe_direction,
                    amplitudes=amps, drive=drive,
                    metadata=_drive_metadata(system, drive, coupling))


def sweep_conversion(system: SystemConfig, drive: DriveField, grid: FrequencyGrid,
                     probe_direction: Direction | str | None = None) -> Spectrum:
    """External conversion efficiency as the telecom probe is tuned across mode ``c``."""
    direction = drive.direction if probe_direction is None else Direction.parse(probe_direction)
    probe = ProbeContext(Branch.CONVERSION, grid.omega, direction)
    coupling = effective_coupling(system, drive, direction)
    delta_b, delta_c = detunings(system, drive, probe)
    eta = conversion_efficiency(system.mode_b, system.mode_c, coupling.C, delta_b, delta_c)
    amps = conversion_amplitude(system.mode_b, system.mode_c, coupling.G_mag, delta_b, delta_c)
    return Spectrum(grid, eta, Branch.CONVERSION, direction, amplitudes=amps, drive=drive,
                    metadata=_drive_metadata(system, drive, coupling))


def power_series(system: SystemConfig, powers: Sequence[float], grid: FrequencyGrid,
                 branch: Branch | str, drive: DriveField | None = None,
                 probe_direction: Direction | str | None = None) -> list[Spectrum]:
    """One spectrum per drive power; ``drive`` supplies frequency and direction."""
    branch = Branch.parse(branch)
    if drive is None:
        drive = DriveField.on_resonance(system, 0.0)
    direction = drive.direction if probe_direction is None else probe_direction
    out = []
    for p in powers:
        d = drive.with_power(float(p))
        if branch is Branch.NOIT:
            out.append(sweep_noit(system, d, grid, direction))
        else:
            out.append(sweep_conversion(system, d, grid, direction))
    return out


def _crossing(x: np.ndarray, y: np.ndarray, i_from: int, step: int, level: float,
              stop: int | None = None) -> float | None:
    """Walk from ``i_from`` until ``y`` drops below ``level``; linearly interpolate."""
    stop = (len(y) - 1 if step > 0 else 0) if stop is None else stop
    i = i_from
    while i != stop:
        j = i + step
        if y[j] < level:
            return x[i] + (level - y[i]) * (x[j] - x[i]) / (y[j] - y[i])
        i = j
    return None


def peak_fwhm(x: np.ndarray, y: np.ndarray) -> float:
    """Full width at half of (max - baseline), baseline being the lower edge value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i_max = int(np.argmax(y))
    if i_max == 0 or i_max == len(y) - 1:
        raise FeatureError("peak truncated by grid")
    baseline = min(y[0], y[-1])
    level = baseline + 0.5 * (y[i_max] - baseline)
    left = _crossing(x, y, i_max, -1, level)
    right = _crossing(x, y, i_max, +1, level)
    if left is None or right is None:
        raise FeatureError("peak truncated by grid")
    return right - left


def extract_fwhm(spectrum: Spectrum) -> float:
    """FWHM [rad/s] of the spectrum's global maximum (e.g. a conversion peak)."""
    return peak_fwhm(spectrum.grid.offsets, spectrum.values)


def dip_fwhm(spectrum: Spectrum) -> float:
    """FWHM [rad/s] of the spectrum's global minimum (a transmission dip)."""
    return peak_fwhm(spectrum.grid.offsets, -spectrum.values)


@dataclass(frozen=True)
class NoitFeatures:
    dip_min: float
    center_T: float
    peak_height: float
    peak_width: float
    flat: bool


def _local_minima(y: np.ndarray) -> np.ndarray:
    inner = (y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])
    return np.flatnonzero(inner) + 1


def extract_noit_features(spectrum: Spectrum) -> NoitFeatures:
    """
    Transparency-window features of a transmission spectrum.

    The window is the maximum between the two deepest local minima; its height
    is measured from the mean of those minima and its width at half that height.
    A spectrum without two minima is reported as flat with zero height.
    """
    x = spectrum.grid.offsets
    y = spectrum.values
    dip_min = float(np.min(y))
    minima = _local_minima(y)
    if len(minima) < 2:
        center_T = float(y[len(y) // 2])
        return NoitFeatures(dip_min, center_T, 0.0, 0.0, True)
    i1, i2 = sorted(minima[np.argsort(y[minima], kind="stable")[:2]])
    i_peak = i1 + int(np.argmax(y[i1:i2 + 1]))
    center_T = float(y[i_peak])
    floor = 0.5 * (y[i1] + y[i2])
    height = center_T - floor
    if height <= 0:
        return NoitFeatures(dip_min, center_T, 0.0, 0.0, True)
    level = floor + 0.5 * height
    left = _crossing(x, y, i_peak, -1, level, stop=i1)
    right = _crossing(x, y, i_peak, +1, level, stop=i2)
    width = (right - left) if left is not None and right is not None else float("nan")
    return NoitFeatures(dip_min, center_T, float(height), float(width), False)
