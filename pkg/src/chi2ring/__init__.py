"""Coupled-mode simulation and spectrum fitting for chi(2) triply resonant microrings."""

from .model import (
    Branch,
    CouplingState,
    Direction,
    DriveField,
    ModeParams,
    ProbeContext,
    SystemConfig,
    calibrate_g,
    detunings,
    effective_coupling,
    loaded_q,
    momentum_matched,
    pump_photon_number,
)
from .spectra import FrequencyGrid, Spectrum, sweep_conversion, sweep_noit
from .steady_state import (
    conversion_efficiency,
    internal_efficiency,
    max_external_efficiency,
    noit_amplitude,
)

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "CouplingState",
    "Direction",
    "DriveField",
    "FrequencyGrid",
    "ModeParams",
    "ProbeContext",
    "Spectrum",
    "SystemConfig",
    "calibrate_g",
    "conversion_efficiency",
    "detunings",
    "effective_coupling",
    "internal_efficiency",
    "loaded_q",
    "max_external_efficiency",
    "momentum_matched",
    "noit_amplitude",
    "pump_photon_number",
    "sweep_conversion",
    "sweep_noit",
]
