"""
Closed-form frequency-domain response of the linearized two-mode system.

In the frame rotating at the input carriers the intracavity amplitudes obey

    db/dt = -(i delta_b + kappa_b) b - i G c   + sqrt(2 kappa_b1) b_in
    dc/dt = -(i delta_c + kappa_c) c - i G* b  + sqrt(2 kappa_c1) c_in

with outputs ``x_out = x_in - sqrt(2 kappa_x1) x``. Setting the time
derivatives to zero and eliminating ``c`` (with ``c_in = 0``) gives

    t_b = 1 - 2 kappa_b1 / (i delta_b + kappa_b + |G|^2 / (i delta_c + kappa_c))
        = 1 + 2 kappa_b1 / (-i delta_b - kappa_b + |G|^2 / (-i delta_c - kappa_c))

which is the transparency formula used throughout. Eliminating ``b`` with
``b_in = 0`` gives the converted amplitude

    s = -2i G sqrt(kappa_b1 kappa_c1) / ((i delta_b + kappa_b)(i delta_c + kappa_c) + |G|^2)

whose squared modulus is the external conversion efficiency. All efficiencies
here are photon-flux ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Branch, CouplingState, Direction, ModeParams, SystemConfig


@dataclass(frozen=True)
class FluxBudget:
    """Where a unit input photon flux ends up (all fractions of the input)."""

    transmitted: float
    converted: float
    dissipated_b: float
    dissipated_c: float

    @property
    def total(self) -> float:
        return self.transmitted + self.converted + self.dissipated_b + self.dissipated_c


@dataclass(frozen=True)
class PortMatrix:
    """
    2x2 amplitude scattering matrix, ports ordered (b, c).

    ``matrix[0, 0]`` is the b-port through amplitude, ``matrix[1, 0]`` the
    amplitude converted from a b-port input into the c-port, and so on.
    """

    matrix: np.ndarray
    direction: Direction

    def is_unitary(self, atol: float = 1e-9) -> bool:
        s = self.matrix
        return bool(np.allclose(s.conj().T @ s, np.eye(2), rtol=0.0, atol=atol))


def noit_amplitude(mode_b: ModeParams, mode_c: ModeParams, G_mag, delta_b, delta_c):
    """Complex through amplitude ``t_b`` of the probed visible mode."""
    denom = -1j * delta_b - mode_b.kappa + np.abs(G_mag) ** 2 / (-1j * delta_c - mode_c.kappa)
    return 1.0 + 2.0 * mode_b.kappa1 / denom


def noit_transmission(mode_b: ModeParams, mode_c: ModeParams, G_mag, delta_b, delta_c):
    return np.abs(noit_amplitude(mode_b, mode_c, G_mag, delta_b, delta_c)) ** 2


def coupling_ratio_product(mode_b: ModeParams, mode_c: ModeParams) -> float:
    """Waveguide extraction factor ``(kappa_b1/kappa_b)(kappa_c1/kappa_c)``."""
    return mode_b.external_fraction * mode_c.external_fraction


def conversion_efficiency(mode_b: ModeParams, mode_c: ModeParams, C, delta_b, delta_c):
    """External telecom-to-visible photon conversion efficiency."""
    lorentz = (1.0 + 1j * delta_b / mode_b.kappa) * (1.0 + 1j * delta_c / mode_c.kappa) + C
    return coupling_ratio_product(mode_b, mode_c) * 4.0 * C / np.abs(lorentz) ** 2


def internal_efficiency(C):
    """Peak conversion efficiency with ideal waveguide extraction, ``4C/(1+C)^2``."""
    return 4.0 * C / (1.0 + C) ** 2


def max_external_efficiency(coupling_ratios, C):
    """
    On-resonance external efficiency.

    ``coupling_ratios`` is either the product ``(kappa_b1/kappa_b)(kappa_c1/kappa_c)``
    or a pair of the two individual ratios.
    """
    product = np.prod(coupling_ratios) if np.ndim(coupling_ratios) else coupling_ratios
    return product * internal_efficiency(C)


def conversion_power_ratio(eta, mode_out: ModeParams, mode_in: ModeParams):
    """Output/input optical power ratio for a photon-flux efficiency ``eta``."""
    return eta * mode_out.omega0 / mode_in.omega0


def intracavity_amplitudes(mode_b: ModeParams, mode_c: ModeParams, G, b_in, c_in,
                           delta_b, delta_c):
    """
    Steady-state intracavity amplitudes ``(b, c)``.

    ``G`` may be complex; ``b_in`` and ``c_in`` are flux-normalized input
    amplitudes (so ``|x_in|^2`` is photons per second). Broadcasts over arrays.
    """
    m11 = 1j * delta_b + mode_b.kappa
    m22 = 1j * delta_c + mode_c.kappa
    det = m11 * m22 + np.abs(G) ** 2
    sb = np.sqrt(2.0 * mode_b.kappa1) * b_in
    sc = np.sqrt(2.0 * mode_c.kappa1) * c_in
    b = (m22 * sb - 1j * G * sc) / det
    c = (m11 * sc - 1j * np.conj(G) * sb) / det
    return b, c


def output_amplitudes(mode_b: ModeParams, mode_c: ModeParams, G, b_in, c_in,
                      delta_b, delta_c):
    b, c = intracavity_amplitudes(mode_b, mode_c, G, b_in, c_in, delta_b, delta_c)
    b_out = b_in - np.sqrt(2.0 * mode_b.kappa1) * b
    c_out = c_in - np.sqrt(2.0 * mode_c.kappa1) * c
    return b_out, c_out


def conversion_amplitude(mode_b: ModeParams, mode_c: ModeParams, G, delta_b, delta_c):
    """Amplitude reaching the visible bus per unit telecom input amplitude."""
    b_out, _ = output_amplitudes(mode_b, mode_c, G, 0.0, 1.0, delta_b, delta_c)
    return b_out


def port_matrix(system: SystemConfig, coupling: CouplingState, delta_b: float,
                delta_c: float, direction: Direction | str = Direction.CCW,
                drive_direction: Direction | str = Direction.CCW) -> PortMatrix:
    """
    Four-port (two-in, two-out) scattering matrix at one detuning pair.

    ``coupling`` is taken as the co-propagating coupling; a probe travelling
    against the drive sees ``G = 0`` and the matrix is diagonal.
    """
    direction = Direction.parse(direction)
    G = coupling.G_mag if direction is Direction.parse(drive_direction) else 0.0
    mb, mc = system.mode_b, system.mode_c
    s = np.empty((2, 2), dtype=complex)
    s[0, 0], s[1, 0] = output_amplitudes(mb, mc, G, 1.0, 0.0, delta_b, delta_c)
    s[0, 1], s[1, 1] = output_amplitudes(mb, mc, G, 0.0, 1.0, delta_b, delta_c)
    return PortMatrix(s, direction)


def flux_budget(system: SystemConfig, coupling: CouplingState, branch: Branch | str,
                delta_b: float, delta_c: float) -> FluxBudget:
    """Split one unit of input flux (into b for NOIT, into c for conversion)."""
    branch = Branch.parse(branch)
    mb, mc = system.mode_b, system.mode_c
    G = coupling.G_mag
    if branch is Branch.NOIT:
        b_in, c_in = 1.0, 0.0
    else:
        b_in, c_in = 0.0, 1.0
    b, c = intracavity_amplitudes(mb, mc, G, b_in, c_in, delta_b, delta_c)
    b_out, c_out = output_amplitudes(mb, mc, G, b_in, c_in, delta_b, delta_c)
    if branch is Branch.NOIT:
        transmitted, converted = abs(b_out) ** 2, abs(c_out) ** 2
    else:
        transmitted, converted = abs(c_out) ** 2, abs(b_out) ** 2
    return FluxBudget(
        transmitted=float(transmitted),
        converted=float(converted),
        dissipated_b=float(2.0 * mb.kappa0 * abs(b) ** 2),
        dissipated_c=float(2.0 * mc.kappa0 * abs(c) ** 2),
    )
