"""
Time-domain coupled-mode integration (classic fixed-step RK4).

Amplitudes are classical c-numbers normalized so that ``|x|^2`` is an
intracavity photon number and ``|x_in|^2`` a photon flux [1/s]. Every mode is
written in a frame rotating at its input carrier, so only detunings appear and
the step size is set by the decay and coupling rates rather than the optical
frequency. For the three-wave-mixing model the carriers must satisfy
``omega_b = omega_a + omega_c`` for the frame to be stationary; the helpers in
this module always build inputs that way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import (
    HBAR,
    Branch,
    CouplingState,
    DriveField,
    ProbeContext,
    SystemConfig,
    detunings,
    drive_detuning,
)

BLOWUP_FACTOR = 1e6
MAX_STEP_FRACTION = 0.1


class IntegrationError(RuntimeError):
    """Integration aborted (blow-up) or failed to reach a steady state."""


@dataclass(frozen=True)
class LinearInputs:
    """Constant coherent inputs into the linearized b/c system and their detunings."""

    b_in: complex = 0.0
    c_in: complex = 0.0
    delta_b: float = 0.0
    delta_c: float = 0.0


@dataclass(frozen=True)
class ThreeModeInputs:
    a_in: complex = 0.0
    b_in: complex = 0.0
    c_in: complex = 0.0
    delta_a: float = 0.0
    delta_b: float = 0.0
    delta_c: float = 0.0


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    amplitudes: dict[str, np.ndarray]
    inputs: LinearInputs | ThreeModeInputs
    dt: float
    method: str = "rk4"
    lossless: bool = False

    def final(self) -> dict[str, complex]:
        return {k: complex(v[-1]) for k, v in self.amplitudes.items()}


@dataclass(frozen=True)
class SteadyState:
    amplitudes: dict[str, complex]
    elapsed: float
    lifetimes: int
    state: np.ndarray = field(repr=False, default=None)


def rk4(rhs: Callable[[np.ndarray], np.ndarray], y0: np.ndarray, dt: float, steps: int,
        record_every: int = 1, limit: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Integrate ``dy/dt = rhs(y)`` (autonomous) with classic RK4.

    Returns the recorded step indices and states. Raises ``IntegrationError``
    if any component magnitude exceeds ``limit``.
    """
    y = np.array(y0, dtype=complex)
    n_rec = steps // record_every + 1
    out = np.empty((n_rec, y.size), dtype=complex)
    idx = np.empty(n_rec, dtype=np.int64)
    out[0], idx[0] = y, 0
    half = 0.5 * dt
    sixth = dt / 6.0
    r = 1
    for n in range(1, steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + half * k1)
        k3 = rhs(y + half * k2)
        k4 = rhs(y + dt * k3)
        y = y + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if limit is not None and not np.max(np.abs(y)) <= limit:
            raise IntegrationError(
                f"amplitude blow-up at step {n} (t={n * dt:.3e} s): "
                f"max |x| = {np.max(np.abs(y)):.3e} exceeds {limit:.3e}; reduce dt")
        if n % record_every == 0:
            out[r], idx[r] = y, n
            r += 1
    return idx[:r], out[:r]


def _linear_matrix(system: SystemConfig, G: complex, inputs: LinearInputs):
    mb, mc = system.mode_b, system.mode_c
    A = np.array([[-(1j * inputs.delta_b + mb.kappa), -1j * G],
                  [-1j * np.conj(G), -(1j * inputs.delta_c + mc.kappa)]], dtype=complex)
    s = np.array([math.sqrt(2.0 * mb.kappa1) * inputs.b_in,
                  math.sqrt(2.0 * mc.kappa1) * inputs.c_in], dtype=complex)
    return A, s


def _coupling_value(coupling: CouplingState | complex | float) -> complex:
    return coupling.G_mag if isinstance(coupling, CouplingState) else coupling


def _amplitude_limit(sources: Sequence[complex], min_kappa: float,
                     initial: np.ndarray) -> float | None:
    init = float(np.max(np.abs(initial))) if initial.size else 0.0
    if min_kappa <= 0:
        bound = init
    else:
        bound = sum(abs(s) for s in sources) / min_kappa + init
    return BLOWUP_FACTOR * bound if bound > 0 else None


def linear_max_rate(system: SystemConfig, G: complex) -> float:
    return max(system.mode_b.kappa, system.mode_c.kappa, abs(G))


def evolve_linearized(system: SystemConfig, coupling: CouplingState | complex | float,
                      inputs: LinearInputs, duration: float, dt: float,
                      initial: Sequence[complex] = (0.0, 0.0),
                      record_every: int = 1) -> Trajectory:
    """
    Integrate the linearized b/c coupled-mode equations.

    ``coupling`` is a ``CouplingState`` (its ``|G|`` is used) or a possibly
    complex ``G`` [rad/s]. Requires ``dt < 0.1 / max(kappa_b, kappa_c, |G|)``.
    """
    G = _coupling_value(coupling)
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    max_rate = linear_max_rate(system, G)
    if not dt < MAX_STEP_FRACTION / max_rate:
        raise ValueError(f"dt={dt:.3e} s too large; need dt < {MAX_STEP_FRACTION / max_rate:.3e} s")
    A, s = _linear_matrix(system, G, inputs)
    y0 = np.asarray(initial, dtype=complex)
    limit = _amplitude_limit(s, min(system.mode_b.kappa, system.mode_c.kappa), y0)
    steps = int(round(duration / dt))

    def rhs(y):
        return A @ y + s

    idx, ys = rk4(rhs, y0, dt, steps, record_every, limit)
    return Trajectory(idx * dt, {"b": ys[:, 0], "c": ys[:, 1]}, inputs, dt)


def _three_mode_rates(system: SystemConfig, lossless: bool):
    if lossless:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    a, b, c = system.mode_a, system.mode_b, system.mode_c
    return (a.kappa, b.kappa, c.kappa,
            math.sqrt(2.0 * a.kappa1), math.sqrt(2.0 * b.kappa1), math.sqrt(2.0 * c.kappa1))


def three_mode_rhs(system: SystemConfig, inputs: ThreeModeInputs, lossless: bool = False):
    """Right-hand side of the full three-wave-mixing equations as a closure."""
    ka, kb, kc, ra, rb, rc = _three_mode_rates(system, lossless)
    g = system.g
    la = -(1j * inputs.delta_a + ka)
    lb = -(1j * inputs.delta_b + kb)
    lc = -(1j * inputs.delta_c + kc)
    sa, sb, sc = ra * inputs.a_in, rb * inputs.b_in, rc * inputs.c_in
    mig = -1j * g

    def rhs(y):
        a, b, c = y
        return np.array([
            la * a + mig * b * np.conj(c) + sa,
            lb * b + mig * a * c + sb,
            lc * c + mig * np.conj(a) * b + sc,
        ])

    return rhs


def three_mode_max_rate(system: SystemConfig, inputs: ThreeModeInputs,
                        initial: np.ndarray, lossless: bool = False) -> float:
    ka, kb, kc, ra, rb, rc = _three_mode_rates(system, lossless)
    sources = (ra * inputs.a_in, rb * inputs.b_in, rc * inputs.c_in)
    kmin = min(ka, kb, kc)
    amp = float(np.max(np.abs(initial))) if initial.size else 0.0
    if kmin > 0:
        amp += sum(abs(s) for s in sources) / kmin
    return max(ka, kb, kc, system.g * amp)


def evolve_three_mode(system: SystemConfig, inputs: ThreeModeInputs, duration: float,
                      dt: float, initial: Sequence[complex] = (0.0, 0.0, 0.0),
                      record_every: int = 1, lossless: bool = False) -> Trajectory:
    """
    Integrate the full three-mode nonlinear equations.

    ``lossless=True`` zeroes every decay and input-coupling rate, leaving the
    bare three-wave-mixing dynamics (used for conservation checks).
    """
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    y0 = np.asarray(initial, dtype=complex)
    max_rate = three_mode_max_rate(system, inputs, y0, lossless)
    if max_rate > 0 and not dt < MAX_STEP_FRACTION / max_rate:
        raise ValueError(f"dt={dt:.3e} s too large; need dt < {MAX_STEP_FRACTION / max_rate:.3e} s")
    ka, kb, kc, ra, rb, rc = _three_mode_rates(system, lossless)
    limit = _amplitude_limit((ra * inputs.a_in, rb * inputs.b_in, rc * inputs.c_in),
                             min(ka, kb, kc), y0)
    steps = int(round(duration / dt))
    idx, ys = rk4(three_mode_rhs(system, inputs, lossless), y0, dt, steps, record_every, limit)
    return Trajectory(idx * dt, {"a": ys[:, 0], "b": ys[:, 1], "c": ys[:, 2]},
                      inputs, dt, lossless=lossless)


def three_mode_inputs(system: SystemConfig, drive: DriveField, branch: Branch | str,
                      probe_omega: float, probe_flux: float) -> ThreeModeInputs:
    """Inputs for a drive on ``a`` plus a weak probe on ``b`` (NOIT) or ``c`` (conversion)."""
    branch = Branch.parse(branch)
    delta_b, delta_c = detunings(system, drive, ProbeContext(branch, probe_omega))
    a_in = math.sqrt(drive.power / (HBAR * drive.omega))
    p_in = math.sqrt(probe_flux)
    b_in, c_in = (p_in, 0.0) if branch is Branch.NOIT else (0.0, p_in)
    return ThreeModeInputs(a_in, b_in, c_in, drive_detuning(system, drive), delta_b, delta_c)


def ring_to_steady_state(system: SystemConfig, inputs: LinearInputs | ThreeModeInputs,
                         coupling: CouplingState | complex | float | None = None,
                         tolerance: float = 1e-10, dt: float | None = None,
                         max_lifetimes: int = 200) -> SteadyState:
    """
    Integrate from rest until the amplitudes change by less than ``tolerance``
    (relative) over one lifetime of the slowest mode.

    With ``coupling`` given the linearized model is used (``inputs`` must be
    ``LinearInputs``); otherwise the three-mode model with ``system.g``.
    """
    linear = coupling is not None
    if linear:
        G = _coupling_value(coupling)
        kmin = min(system.mode_b.kappa, system.mode_c.kappa)
        max_rate = linear_max_rate(system, G)
        y = np.zeros(2, dtype=complex)
        labels = ("b", "c")
    else:
        kmin = min(system.mode_a.kappa, system.mode_b.kappa, system.mode_c.kappa)
        y = np.zeros(3, dtype=complex)
        max_rate = three_mode_max_rate(system, inputs, y)
        labels = ("a", "b", "c")
    lifetime = 1.0 / kmin
    if dt is None:
        dt = 0.5 * MAX_STEP_FRACTION / max_rate
    steps = max(1, math.ceil(lifetime / dt))
    dt = lifetime / steps
    if linear:
        A, s = _linear_matrix(system, G, inputs)
        rhs = lambda v: A @ v + s  # noqa: E731
        limit = _amplitude_limit(s, kmin, y)
    else:
        if not dt < MAX_STEP_FRACTION / max_rate:
            raise ValueError("dt too large for the three-mode rates")
        rhs = three_mode_rhs(system, inputs)
        ka, kb, kc, ra, rb, rc = _three_mode_rates(system, False)
        limit = _amplitude_limit((ra * inputs.a_in, rb * inputs.b_in, rc * inputs.c_in), kmin, y)
    for n in range(1, max_lifetimes + 1):
        _, ys = rk4(rhs, y, dt, steps, record_every=steps, limit=limit)
        y_new = ys[-1]
        scale = np.maximum(np.abs(y_new), np.finfo(float).tiny)
        change = np.abs(y_new - y)
        y = y_new
        if np.all((change <= tolerance * scale) | (change == 0)):
            return SteadyState({k: complex(v) for k, v in zip(labels, y)}, n * lifetime, n, y)
    raise IntegrationError(
        f"no steady state within {max_lifetimes} lifetimes (relative change "
        f"{float(np.max(change / scale)):.2e}); possible limit cycle or instability")


def linear_outputs(system: SystemConfig, inputs: LinearInputs, b: complex, c: complex):
    b_out = inputs.b_in - math.sqrt(2.0 * system.mode_b.kappa1) * b
    c_out = inputs.c_in - math.sqrt(2.0 * system.mode_c.kappa1) * c
    return b_out, c_out


CONSERVED = {
    "a+b": lambda a, b, c: np.abs(a) ** 2 + np.abs(b) ** 2,
    "c+b": lambda a, b, c: np.abs(c) ** 2 + np.abs(b) ** 2,
    "a-c": lambda a, b, c: np.abs(a) ** 2 - np.abs(c) ** 2,
}


def conservation_residual(trajectory: Trajectory,
                          quantities: Sequence[str] = ("a+b", "c+b", "a-c")) -> dict[str, float]:
    """Maximum drift ``max_t |Q(t) - Q(0)|`` of the Manley-Rowe photon-number combinations."""
    amps = trajectory.amplitudes
    if not {"a", "b", "c"} <= amps.keys():
        raise ValueError("conservation residual needs a three-mode trajectory")
    out = {}
    for name in quantities:
        q = CONSERVED[name](amps["a"], amps["b"], amps["c"])
        out[name] = float(np.max(np.abs(q - q[0])))
    return out


def total_photons(trajectory: Trajectory) -> np.ndarray:
    return sum(np.abs(v) ** 2 for v in trajectory.amplitudes.values())


# ---------------------------------------------------------------------------
# checks against the frequency-domain formulas


@dataclass(frozen=True, eq=False)
class OracleComparison:
    probe_omega: np.ndarray
    time_domain: np.ndarray
    closed_form: np.ndarray

    @property
    def relative_error(self) -> np.ndarray:
        return np.abs(self.time_domain - self.closed_form) / np.abs(self.closed_form)

    @property
    def max_relative_error(self) -> float:
        return float(np.max(self.relative_error))


def ringup_comparison(system: SystemConfig, drive: DriveField, probe_omegas: Sequence[float],
                      branch: Branch | str, lifetimes: float = 20.0,
                      dt: float | None = None) -> OracleComparison:
    """
    Ring the linearized system up from rest for ``lifetimes`` of the slowest
    mode at each probe frequency and compare the output flux ratio with the
    closed-form transmission (NOIT) or conversion efficiency.
    """
    from .model import effective_coupling
    from .steady_state import conversion_efficiency, noit_transmission

    branch = Branch.parse(branch)
    coupling = effective_coupling(system, drive, drive.direction)
    G = coupling.G_mag
    mb, mc = system.mode_b, system.mode_c
    if dt is None:
        dt = 0.5 * MAX_STEP_FRACTION / linear_max_rate(system, G)
    duration = lifetimes / min(mb.kappa, mc.kappa)
    omegas = np.asarray(probe_omegas, dtype=float)
    td = np.empty(omegas.size)
    cf = np.empty(omegas.size)
    for i, w in enumerate(omegas):
        delta_b, delta_c = detunings(system, drive, ProbeContext(branch, w))
        if branch is Branch.NOIT:
            inputs = LinearInputs(1.0, 0.0, delta_b, delta_c)
            cf[i] = noit_transmission(mb, mc, G, delta_b, delta_c)
        else:
            inputs = LinearInputs(0.0, 1.0, delta_b, delta_c)
            cf[i] = conversion_efficiency(mb, mc, coupling.C, delta_b, delta_c)
        traj = evolve_linearized(system, G, inputs, duration, dt,
                                 record_every=max(1, int(round(duration / dt))))
        end = traj.final()
        b_out, c_out = linear_outputs(system, inputs, end["b"], end["c"])
        td[i] = abs(b_out) ** 2
    return OracleComparison(omegas, td, cf)


def rk4_error_ratio(system: SystemConfig, G: complex, dt: float, duration: float,
                    delta_b: float = 0.0, delta_c: float = 0.0) -> tuple[float, float]:
    """
    Global error of RK4 against the exact matrix exponential for free decay
    from ``b = 1`` at steps ``dt`` and ``dt / 2``; returns both errors.
    """
    from scipy.linalg import expm

    inputs = LinearInputs(0.0, 0.0, delta_b, delta_c)
    A, _ = _linear_matrix(system, G, inputs)
    y0 = np.array([1.0, 0.0], dtype=complex)
    errors = []
    for h in (dt, 0.5 * dt):
        traj = evolve_linearized(system, G, inputs, duration, h, initial=y0)
        t_end = traj.times[-1]
        exact = expm(A * t_end) @ y0
        got = np.array([traj.amplitudes["b"][-1], traj.amplitudes["c"][-1]])
        errors.append(float(np.max(np.abs(got - exact))))
    return errors[0], errors[1]


def depletion_scan(system: SystemConfig, drive: DriveField, probe_to_drive: Sequence[float],
                   branch: Branch | str = Branch.CONVERSION,
                   probe_omega: float | None = None) -> list[tuple[float, float | None]]:
    """
    Relative deviation of the full three-mode steady-state output from the
    linearized prediction as the probe flux approaches the drive flux.

    Returns ``(ratio, deviation)`` pairs; ``deviation`` is None when the
    nonlinear system does not settle.
    """
    from .model import effective_coupling
    from .steady_state import conversion_efficiency, noit_transmission

    branch = Branch.parse(branch)
    if probe_omega is None:
        probe_omega = system.mode_c.omega0 if branch is Branch.CONVERSION else system.mode_b.omega0
    coupling = effective_coupling(system, drive, drive.direction)
    delta_b, delta_c = detunings(system, drive, ProbeContext(branch, probe_omega))
    mb, mc = system.mode_b, system.mode_c
    if branch is Branch.NOIT:
        linear = float(noit_transmission(mb, mc, coupling.G_mag, delta_b, delta_c))
    else:
        linear = float(conversion_efficiency(mb, mc, coupling.C, delta_b, delta_c))
    drive_flux = drive.power / (HBAR * drive.omega)
    out = []
    for ratio in probe_to_drive:
        flux = ratio * drive_flux
        inputs = three_mode_inputs(system, drive, branch, probe_omega, flux)
        try:
            ss = ring_to_steady_state(system, inputs, tolerance=1e-9)
        except IntegrationError:
            out.append((float(ratio), None))
            continue
        if branch is Branch.NOIT:
            b_out = inputs.b_in - math.sqrt(2.0 * mb.kappa1) * ss.amplitudes["b"]
            value = abs(b_out) ** 2 / flux
        else:
            b_out = -math.sqrt(2.0 * mb.kappa1) * ss.amplitudes["b"]
            value = abs(b_out) ** 2 / flux
        out.append((float(ratio), abs(value - linear) / abs(linear)))
    return out
