"""
JSON run configuration.

Keys carry their units. Rates given as ``*_over_2pi_ghz`` are ordinary
frequencies in GHz and become angular rates (x 2 pi) on load.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

from .model import (
    TWO_PI,
    Branch,
    Direction,
    DriveField,
    ModeParams,
    SystemConfig,
    calibrate_g,
    ghz_to_rad,
)

SCHEMA_VERSION = 1
BUNDLED = ("paper",)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    frequency_a_thz: float = 193.6
    frequency_c_thz: float = 193.4
    frequency_b_thz: float | None = None  # None: exact triple resonance
    q_a_loaded: float | None = 1.8e5
    kappa_a_over_2pi_ghz: float | None = None
    kappa_b_over_2pi_ghz: float | None = 1.84
    kappa_c_over_2pi_ghz: float | None = 0.46
    q_b_loaded: float | None = None
    q_c_loaded: float | None = None
    external_fraction_a: float = 0.5
    external_fraction_b: float | None = None
    external_fraction_c: float | None = None
    coupling_ratio_product: float | None = 0.14  # split evenly when per-mode fractions absent
    mode_number_a: int = 244
    mode_number_b: int = 487
    mode_number_c: int = 243
    unit_power_cooperativity_per_mw: float | None = 0.035
    g_over_2pi_hz: float | None = None
    drive_powers_mw: list[float] = field(default_factory=lambda: [13.3])
    drive_detuning_over_2pi_ghz: float = 0.0
    drive_direction: str = "ccw"
    probe_direction: str = "ccw"
    grid_span_over_2pi_ghz: float | None = None
    grid_points: int = 4001
    noise_level: float = 0.0
    seed: int = 0
    description: str = ""
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if (self.g_over_2pi_hz is None) == (self.unit_power_cooperativity_per_mw is None):
            raise ConfigError("give exactly one of g_over_2pi_hz and unit_power_cooperativity_per_mw")
        if self.unit_power_cooperativity_per_mw is not None and not self.unit_power_cooperativity_per_mw > 0:
            raise ConfigError("unit_power_cooperativity_per_mw must be positive")
        if self.g_over_2pi_hz is not None and self.g_over_2pi_hz < 0:
            raise ConfigError("g_over_2pi_hz must be non-negative")
        if int(self.grid_points) != self.grid_points or self.grid_points < 2:
            raise ConfigError("grid_points must be an integer >= 2")
        if self.grid_span_over_2pi_ghz is not None and not self.grid_span_over_2pi_ghz > 0:
            raise ConfigError("grid_span_over_2pi_ghz must be positive")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be non-negative")
        if any(p < 0 for p in self.drive_powers_mw):
            raise ConfigError("drive powers must be non-negative")
        for key in ("drive_direction", "probe_direction"):
            try:
                Direction.parse(getattr(self, key))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        for label in "abc":
            _linewidth_source(self, label)

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def updated(self, **changes: Any) -> "RunConfig":
        data = self.to_dict()
        data.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig.from_dict(data)


def _linewidth_source(cfg: RunConfig, label: str) -> tuple[str, float]:
    kappa = getattr(cfg, f"kappa_{label}_over_2pi_ghz")
    q = getattr(cfg, f"q_{label}_loaded")
    if (kappa is None) == (q is None):
        raise ConfigError(f"mode {label}: give exactly one of kappa_{label}_over_2pi_ghz and q_{label}_loaded")
    value = kappa if kappa is not None else q
    if not value > 0:
        raise ConfigError(f"mode {label}: linewidth/Q must be positive")
    return ("kappa", kappa) if kappa is not None else ("q", q)


def _external_fraction(cfg: RunConfig, label: str) -> float:
    value = getattr(cfg, f"external_fraction_{label}")
    if value is not None:
        return value
    if label in "bc" and cfg.coupling_ratio_product is not None:
        other = getattr(cfg, "external_fraction_" + ("c" if label == "b" else "b"))
        if other is not None:
            return cfg.coupling_ratio_product / other
        return math.sqrt(cfg.coupling_ratio_product)
    raise ConfigError(f"mode {label}: external_fraction_{label} or coupling_ratio_product required")


def load_config(source: str | Path) -> RunConfig:
    """Load a JSON config from a path, or a bundled one by name (e.g. ``paper``)."""
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        name = path.stem if path.suffix == ".json" else str(source)
        if name not in BUNDLED:
            raise FileNotFoundError(f"config {source!s} not found")
        text = resources.files("chi2ring").joinpath("data").joinpath(f"{name}.json").read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(obj)


def build_modes(cfg: RunConfig) -> tuple[ModeParams, ModeParams, ModeParams]:
    w_a = TWO_PI * cfg.frequency_a_thz * 1e12
    w_c = TWO_PI * cfg.frequency_c_thz * 1e12
    w_b = TWO_PI * cfg.frequency_b_thz * 1e12 if cfg.frequency_b_thz is not None else w_a + w_c
    modes = []
    for label, omega, m in (("a", w_a, cfg.mode_number_a), ("b", w_b, cfg.mode_number_b),
                            ("c", w_c, cfg.mode_number_c)):
        kind, value = _linewidth_source(cfg, label)
        kappa = ghz_to_rad(value) if kind == "kappa" else omega / (2.0 * value)
        try:
            modes.append(ModeParams.from_linewidth(label, omega, kappa,
                                                   _external_fraction(cfg, label), int(m)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return modes[0], modes[1], modes[2]


def build_drive(cfg: RunConfig, system: SystemConfig, power_w: float | None = None) -> DriveField:
    power = cfg.drive_powers_mw[0] * 1e-3 if power_w is None else power_w
    return DriveField.on_resonance(system, power, cfg.drive_direction,
                                   ghz_to_rad(cfg.drive_detuning_over_2pi_ghz))


def build_system(cfg: RunConfig) -> SystemConfig:
    """Modes plus ``g``, calibrating ``g`` from the unit-power cooperativity when given."""
    a, b, c = build_modes(cfg)
    system = SystemConfig(a, b, c, 0.0)
    if cfg.g_over_2pi_hz is not None:
        return system.with_g(TWO_PI * cfg.g_over_2pi_hz)
    reference = build_drive(cfg, system, power_w=1e-3)
    # 1/mW -> 1/W
    return system.with_g(calibrate_g(system, cfg.unit_power_cooperativity_per_mw * 1e3, reference))


def branch_center(system: SystemConfig, branch: Branch) -> float:
    return system.mode_b.omega0 if branch is Branch.NOIT else system.mode_c.omega0
