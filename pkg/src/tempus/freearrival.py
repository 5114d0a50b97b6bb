"""Free-particle arrival times: the generalized Kijowski distribution.

The arrival kernel at the plane ``x = 0`` is diagonal in the sign of the
momentum,

    Pi^A(t) = hbar/(2 pi m) (|A_+(t)|^2 + |A_-(t)|^2),
    A_+-(t) = sum_{k>0} w_k sqrt(k) exp(-i hbar k^2 t / 2m) psi(+-k),

so right- and left-movers contribute incoherently. The time exponent carries
``-i`` (arrival sense): a right-mover launched at ``x0 < 0`` peaks near
``m |x0| / hbar k0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernelcore
from .kernelcore import KernelBasis, spectral_sum
from .state import (NATURAL, MomentumGrid, TimeDistribution, UnitSystem, WavePacket,
                    _check_uniform, position_amplitude, position_derivative, to_energy_channels)


def _half_line_amplitudes(k_pos, w_pos, amps, times, units: UnitSystem):
    """``A[t, j] = sum_k w sqrt(k) e^{-i hbar k^2 t/2m} amps[k, j]`` for ``k > 0``."""
    coeffs = (w_pos * np.sqrt(k_pos))[:, None] * amps
    return spectral_sum(times, units.energy(k_pos), coeffs, -1.0, units.hbar)


def _split(packet: WavePacket):
    grid = packet.grid
    pos = grid.k_values > 0
    k, w = grid.k_values[pos], grid.weights[pos]
    right = packet.amplitudes[pos]
    if grid.is_symmetric:
        left = packet.amplitudes[~pos][::-1]
    elif grid.is_positive:
        left = np.zeros_like(right)
    else:
        raise ValueError("arrival distributions need a symmetric or positive-only momentum grid")
    return k, w, right, left


def kijowski_1d(packet: WavePacket, times, units: UnitSystem = NATURAL) -> TimeDistribution:
    t = np.asarray(times, dtype=float)
    _check_uniform(t)
    k, w, right, left = _split(packet)
    A = _half_line_amplitudes(k, w, np.stack([right, left], axis=1), t, units)
    vals = units.hbar / (2 * np.pi * units.mass) * np.sum(np.abs(A) ** 2, axis=1)
    return TimeDistribution(t, vals)


def free_arrival_basis(packet_or_grid, units: UnitSystem = NATURAL) -> KernelBasis:
    """The constant parity-channel basis whose arrival-sense distribution is Kijowski's."""
    grid = packet_or_grid.grid if isinstance(packet_or_grid, WavePacket) else packet_or_grid
    phi = to_energy_channels(WavePacket(grid, np.zeros(grid.n)), units)
    return KernelBasis.constant(phi)


def current_at_plane(packet: WavePacket, times, x: float = 0.0, units: UnitSystem = NATURAL) -> np.ndarray:
    """Probability current ``(hbar/m) Im[conj(psi) d_x psi]`` at ``x`` for each time."""
    t = np.asarray(times, dtype=float)
    psi = position_amplitude(packet, np.full_like(t, x), t, units)
    dpsi = position_derivative(packet, np.full_like(t, x), t, units)
    return units.hbar / units.mass * np.imag(np.conj(psi) * dpsi)


@dataclass(frozen=True)
class PlanePacket3D:
    """Amplitudes ``psi(k1, k2, k3)`` on a product grid.

    ``amplitudes`` has shape ``(n1, n_transverse)`` with the transverse nodes
    flattened and weighted by ``transverse_weights``. For factorized packets
    ``longitudinal`` and ``transverse`` hold the two factors.
    """

    grid: MomentumGrid
    transverse_k: np.ndarray
    transverse_weights: np.ndarray
    amplitudes: np.ndarray
    longitudinal: WavePacket | None = None
    transverse: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        tw = np.asarray(self.transverse_weights, dtype=float)
        if a.shape != (self.grid.n, tw.size):
            raise ValueError("amplitudes must have shape (n_k1, n_transverse)")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "transverse_weights", tw)

    @property
    def factorized(self) -> bool:
        return self.longitudinal is not None

    def norm(self) -> float:
        return float(np.sum(self.grid.weights[:, None] * self.transverse_weights[None, :] * np.abs(self.amplitudes) ** 2))

    @classmethod
    def from_factors(cls, psi1: WavePacket, chi, transverse_k, transverse_weights) -> "PlanePacket3D":
        """``psi1(k1) chi(k2, k3)``; ``chi`` is flattened over the transverse nodes."""
        chi = np.asarray(chi, dtype=complex).ravel()
        tw = np.asarray(transverse_weights, dtype=float).ravel()
        tnorm = float(np.sum(tw * np.abs(chi) ** 2))
        if abs(tnorm - 1) > 1e-9:
            raise ValueError(f"transverse factor is not normalized (norm {tnorm:.12f})")
        return cls(psi1.grid, np.asarray(transverse_k), tw, np.outer(psi1.amplitudes, chi), psi1, chi)


def kijowski_plane_3d(packet: PlanePacket3D, times, a: float = 0.0, units: UnitSystem = NATURAL) -> TimeDistribution:
    """Arrival distribution at the plane ``x1 = a``.

    The kernel is diagonal in ``(k2, k3)``, so the result is the weighted sum of
    one-dimensional functionals over transverse nodes; no transverse
    coherences are formed. The plane offset enters as ``psi(k1) e^{i k1 a}``.
    """
    t = np.asarray(times, dtype=float)
    _check_uniform(t)
    nrm = packet.norm()
    if abs(nrm - 1) > 1e-9:
        raise ValueError(f"plane packet is not normalized (norm {nrm:.12f})")
    shift = np.exp(1j * packet.grid.k_values * a)
    if packet.factorized:
        tnorm = float(np.sum(packet.transverse_weights * np.abs(packet.transverse) ** 2))
        psi1 = WavePacket(packet.grid, packet.longitudinal.amplitudes * shift)
        return kijowski_1d(psi1, t, units).scaled(tnorm)
    vals = np.zeros(t.size)
    g = packet.grid
    pos = g.k_values > 0
    k, w = g.k_values[pos], g.weights[pos]
    amps = packet.amplitudes * shift[:, None]
    right = amps[pos]
    left = amps[~pos][::-1] if g.is_symmetric else np.zeros_like(right)
    for half in (right, left):
        A = _half_line_amplitudes(k, w, half, t, units)
        vals += np.abs(A) ** 2 @ packet.transverse_weights
    return TimeDistribution(t, units.hbar / (2 * np.pi * units.mass) * vals)


def twisted_basis(grid: MomentumGrid, twist: Callable, units: UnitSystem = NATURAL) -> KernelBasis:
    """Real rotated channel functions ``(cos lambda(k), sin lambda(k))`` per parity channel.

    They keep ``sum_i b_i^2 = 1`` in each channel (so the distribution stays
    normalized and the mean is untouched) while adding
    ``hbar^2 sum_a int dE (d_E lambda)^2 |phi(E,a)|^2`` to the second moment.
    """
    phi = to_energy_channels(WavePacket(grid, np.zeros(grid.n)), units)
    lam = np.asarray(twist(phi.k_values), dtype=float)
    if lam.shape != phi.k_values.shape or not np.all(np.isfinite(lam)):
        raise ValueError("twist must return finite real values on the grid")
    c, s = np.cos(lam), np.sin(lam)
    n_e = lam.size
    f = np.zeros((4, n_e, 2), dtype=complex)
    f[0, :, 0], f[1, :, 0] = c, s
    f[2, :, 1], f[3, :, 1] = c, s
    b = KernelBasis(phi.E_values, phi.weights, phi.channels, f)
    dev = kernelcore.validate_kernel_basis(b, units).max_deviation
    if dev > 1e-8:
        raise ValueError(f"twisted basis violates normalization by {dev:.2e}")
    return b


def variance_penalty(packet: WavePacket, twist: Callable, units: UnitSystem = NATURAL) -> tuple[float, float]:
    """Arrival-time variances with the minimal kernel and with a twisted one."""
    phi = to_energy_channels(packet, units)
    b_min = KernelBasis.constant(phi)
    b_tw = twisted_basis(packet.grid, twist, units)
    return kernelcore.variance(b_min, phi, units), kernelcore.variance(b_tw, phi, units)


def penalty_term(packet: WavePacket, twist: Callable, units: UnitSystem = NATURAL) -> float:
    """The twist-dependent excess ``hbar^2 sum_a int dE (d_E lambda)^2 |phi|^2`` alone."""
    phi = to_energy_channels(packet, units)
    lam = np.asarray(twist(phi.k_values), dtype=float)
    dlam = kernelcore.energy_derivative(lam, phi.E_values, units)
    return float(units.hbar**2 * np.sum(phi.weights * dlam**2 * np.sum(np.abs(phi.amplitudes) ** 2, axis=1)))


def comparison_table(packet: WavePacket, times, x: float = 0.0, units: UnitSystem = NATURAL) -> np.ndarray:
    """Columns ``t, pi_kijowski, j_current`` at the plane ``x``."""
    t = np.asarray(times, dtype=float)
    shifted = WavePacket(packet.grid, packet.amplitudes * np.exp(1j * packet.k * x))
    kij = kijowski_1d(shifted, t, units).values
    return np.column_stack([t, kij, current_at_plane(packet, t, x, units)])


@dataclass(frozen=True)
class BackflowScan:
    """Grid scan over ``psi = G(k1) + r e^{i phase} G(k2)`` restricted to ``k > 0``.

    ``table`` rows are ``(ratio, phase, min_j, t_at_min)``; ``best`` is the row
    with the most negative current.
    """

    k1: float
    k2: float
    sigma_k: float
    x0: float
    table: np.ndarray

    @property
    def best(self) -> np.ndarray:
        return self.table[np.argmin(self.table[:, 2])]

    def components(self, row=None):
        from .state import GaussianComponent
        r, ph = (self.best if row is None else row)[:2]
        return [GaussianComponent(self.k1, self.sigma_k, self.x0),
                GaussianComponent(self.k2, self.sigma_k, self.x0, r * np.exp(1j * ph))]


def backflow_scan(grid: MomentumGrid, k1: float, k2: float, sigma_k: float, ratios, phases, times,
                  x0: float = 0.0, x: float = 0.0, units: UnitSystem = NATURAL) -> BackflowScan:
    from .state import GaussianComponent, superposition
    t = np.asarray(times, dtype=float)
    rows = []
    for r in ratios:
        for ph in phases:
            p = superposition(grid, [GaussianComponent(k1, sigma_k, x0),
                                     GaussianComponent(k2, sigma_k, x0, r * np.exp(1j * ph))], positive_only=True)
            j = current_at_plane(p, t, x, units)
            i = int(np.argmin(j))
            rows.append((float(r), float(ph), float(j[i]), float(t[i])))
    return BackflowScan(k1, k2, sigma_k, x0, np.array(rows))
