"""
Mode parameters, drive description and the pump-to-coupling physics.

All rates are amplitude decay rates (half width at half maximum in angular
frequency) and are stored in rad/s. A mode with total decay rate ``kappa``
therefore has a loaded quality factor ``omega0 / (2 * kappa)``.

The effective beamsplitter coupling between the visible mode ``b`` and the
telecom signal mode ``c`` is ``G = g * <a>``, where ``<a>`` is the coherent
amplitude of the driven telecom mode ``a``. Only ``|G|`` enters any response
computed by this package, so the phase of ``<a>`` is discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

HBAR = 1.054571817e-34  # [J s]
C_VACUUM = 299792458.0  # [m/s]
TWO_PI = 2.0 * math.pi
DEFAULT_DRIVE_WAVELENGTH = 1550e-9  # [m]


class Direction(str, Enum):
    CW = "cw"
    CCW = "ccw"

    @classmethod
    def parse(cls, value: "Direction | str") -> "Direction":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"direction must be 'cw' or 'ccw', got {value!r}") from None


class Branch(str, Enum):
    """Which mode is probed: ``b`` (transparency) or ``c`` (conversion)."""

    NOIT = "noit"
    CONVERSION = "conversion"

    @classmethod
    def parse(cls, value: "Branch | str") -> "Branch":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"branch must be 'noit' or 'conversion', got {value!r}") from None


def ghz_to_rad(value_ghz):
    """Ordinary frequency in GHz -> angular frequency in rad/s."""
    return TWO_PI * 1e9 * value_ghz


def rad_to_ghz(value_rad):
    """Angular frequency in rad/s -> ordinary frequency in GHz."""
    return value_rad / (TWO_PI * 1e9)


def wavelength_to_omega(wavelength: float) -> float:
    return TWO_PI * C_VACUUM / wavelength


@dataclass(frozen=True)
class ModeParams:
    """
    One optical resonance of the ring.

    Parameters
    ----------
    label : str
        ``"a"``, ``"b"`` or ``"c"``.
    omega0 : float
        Resonance angular frequency [rad/s].
    kappa0 : float
        Intrinsic amplitude decay rate [rad/s].
    kappa1 : float
        External (bus waveguide) amplitude decay rate [rad/s].
    m : int
        Azimuthal mode number.
    """

    label: str
    omega0: float
    kappa0: float
    kappa1: float
    m: int = 0

    def __post_init__(self) -> None:
        if self.label not in ("a", "b", "c"):
            raise ValueError(f"mode label must be a, b or c, got {self.label!r}")
        if self.omega0 <= 0:
            raise ValueError(f"omega0 must be positive, got {self.omega0}")
        if self.kappa0 < 0 or self.kappa1 < 0:
            raise ValueError("decay rates must be non-negative")
        if self.kappa0 + self.kappa1 <= 0:
            raise ValueError("total decay rate must be positive")

    @property
    def kappa(self) -> float:
        """Total (loaded) amplitude decay rate [rad/s]."""
        return self.kappa0 + self.kappa1

    @property
    def external_fraction(self) -> float:
        return self.kappa1 / self.kappa

    @classmethod
    def from_linewidth(cls, label: str, omega0: float, kappa: float,
                       external_fraction: float, m: int = 0) -> "ModeParams":
        """Build a mode from its total decay rate and the external share of it."""
        if not 0.0 <= external_fraction <= 1.0:
            raise ValueError(f"external_fraction must lie in [0, 1], got {external_fraction}")
        kappa1 = kappa * external_fraction
        return cls(label, omega0, kappa - kappa1, kappa1, m)

    @classmethod
    def from_q(cls, label: str, omega0: float, q_loaded: float,
               external_fraction: float = 0.5, m: int = 0) -> "ModeParams":
        return cls.from_linewidth(label, omega0, omega0 / (2.0 * q_loaded), external_fraction, m)


@dataclass(frozen=True)
class SystemConfig:
    """The three interacting modes plus the single-photon coupling rate ``g`` [rad/s]."""

    mode_a: ModeParams
    mode_b: ModeParams
    mode_c: ModeParams
    g: float = 0.0

    def __post_init__(self) -> None:
        labels = (self.mode_a.label, self.mode_b.label, self.mode_c.label)
        if labels != ("a", "b", "c"):
            raise ValueError(f"modes must be labelled a, b, c in that order, got {labels}")
        if self.g < 0:
            raise ValueError(f"g must be non-negative, got {self.g}")

    @property
    def frequency_mismatch(self) -> float:
        """``omega_a0 + omega_c0 - omega_b0`` [rad/s]; zero at exact triple resonance."""
        return self.mode_a.omega0 + self.mode_c.omega0 - self.mode_b.omega0

    def with_g(self, g: float) -> "SystemConfig":
        return SystemConfig(self.mode_a, self.mode_b, self.mode_c, g)


@dataclass(frozen=True)
class DriveField:
    """Drive laser on mode ``a``: bus power [W], angular frequency [rad/s], direction."""

    power: float
    omega: float
    direction: Direction = Direction.CCW

    def __post_init__(self) -> None:
        if self.power < 0:
            raise ValueError(f"drive power must be non-negative, got {self.power}")
        if self.omega <= 0:
            raise ValueError(f"drive frequency must be positive, got {self.omega}")
        object.__setattr__(self, "direction", Direction.parse(self.direction))

    @classmethod
    def on_resonance(cls, system: SystemConfig, power: float,
                     direction: Direction | str = Direction.CCW,
                     detuning: float = 0.0) -> "DriveField":
        """Drive at ``omega_a0 - detuning`` (so ``delta_a == detuning``)."""
        return cls(power, system.mode_a.omega0 - detuning, Direction.parse(direction))

    def with_power(self, power: float) -> "DriveField":
        return DriveField(power, self.omega, self.direction)


@dataclass(frozen=True)
class CouplingState:
    """Pump photon number, effective coupling ``|G|`` [rad/s] and cooperativity."""

    n_a: float
    G_mag: float
    C: float


@dataclass(frozen=True)
class ProbeContext:
    branch: Branch
    probe_omega: float | np.ndarray
    probe_direction: Direction = Direction.CCW

    def __post_init__(self) -> None:
        object.__setattr__(self, "branch", Branch.parse(self.branch))
        object.__setattr__(self, "probe_direction", Direction.parse(self.probe_direction))


def loaded_q(mode: ModeParams) -> float:
    return mode.omega0 / (2.0 * mode.kappa)


def detunings(system: SystemConfig, drive: DriveField, probe: ProbeContext):
    """
    Detunings ``(delta_b, delta_c)`` of the two linearly coupled modes.

    On the transparency branch the probe drives ``b`` and the idler in ``c`` sits at
    ``omega_probe - omega_drive``. On the conversion branch the probe drives ``c``
    and the converted light in ``b`` sits at ``omega_drive + omega_probe``.
    Works elementwise on an array of probe frequencies.
    """
    w = probe.probe_omega
    if probe.branch is Branch.NOIT:
        delta_b = system.mode_b.omega0 - w
        delta_c = system.mode_c.omega0 - (w - drive.omega)
    else:
        delta_c = system.mode_c.omega0 - w
        delta_b = system.mode_b.omega0 - (drive.omega + w)
    return delta_b, delta_c


def drive_detuning(system: SystemConfig, drive: DriveField) -> float:
    return system.mode_a.omega0 - drive.omega


def pump_photon_number(system: SystemConfig, drive: DriveField) -> float:
    """Mean intracavity photon number of the driven mode ``a`` in steady state."""
    a = system.mode_a
    flux = drive.power / (HBAR * drive.omega)
    delta_a = drive_detuning(system, drive)
    return 2.0 * a.kappa1 * flux / (delta_a**2 + a.kappa**2)


def cooperativity(G_mag: float, mode_b: ModeParams, mode_c: ModeParams) -> float:
    return G_mag**2 / (mode_b.kappa * mode_c.kappa)


def effective_coupling(system: SystemConfig, drive: DriveField,
                       probe_direction: Direction | str) -> CouplingState:
    """
    Effective coupling seen by a probe travelling in ``probe_direction``.

    Phase matching only holds for a probe co-propagating with the drive; a
    counter-propagating probe sees ``G = 0`` regardless of drive power.
    """
    n_a = pump_photon_number(system, drive)
    if Direction.parse(probe_direction) is drive.direction:
        G_mag = system.g * math.sqrt(n_a)
    else:
        G_mag = 0.0
    return CouplingState(n_a, G_mag, cooperativity(G_mag, system.mode_b, system.mode_c))


def calibrate_g(system: SystemConfig, unit_power_cooperativity: float,
                reference_drive: DriveField) -> float:
    """
    Single-photon coupling ``g`` giving ``C / P = unit_power_cooperativity``.

    ``unit_power_cooperativity`` is in 1/W. The reference drive fixes the drive
    frequency (and thus the pump detuning); its power only needs to be positive.
    """
    if not unit_power_cooperativity > 0:
        raise ValueError(f"unit-power cooperativity must be positive, got {unit_power_cooperativity}")
    if not reference_drive.power > 0:
        raise ValueError("reference drive must have positive power")
    n_per_watt = pump_photon_number(system, reference_drive) / reference_drive.power
    kb, kc = system.mode_b.kappa, system.mode_c.kappa
    return math.sqrt(unit_power_cooperativity * kb * kc / n_per_watt)


def momentum_matched(system: SystemConfig) -> bool:
    return system.mode_a.m + system.mode_c.m == system.mode_b.m
