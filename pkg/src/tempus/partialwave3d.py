"""Rotation-invariant clock kernel for spherical potentials, in ``(k, l, m)`` amplitude space.

With in-asymptote amplitudes ``phi_lm(k)`` the clock distribution is

    Pi(t) = hbar/(2 pi m) sum_lm |sum_k w_k sqrt(k) conj(f_l(k)) e^{i hbar k^2 t/2m} phi_lm(k)|^2,
    f_l = (1 + e^{-2 i delta_l}) / |1 + e^{2 i delta_l}|,

with no coherences between different ``(l, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import spherical_jn, spherical_yn

from .kernelcore import KernelBasis, spectral_sum
from .scatter1d import EPS_REG, RegularizationError, _unwrap_period
from .state import (NATURAL, EnergyChannels, MomentumGrid, TimeDistribution, UnitSystem,
                    _check_uniform, energy_grid, write_csv)

L_MAX_DEFAULT = 8


@dataclass(frozen=True)
class PhaseShiftTable:
    """``delta[l, j]`` in radians on the positive grid ``k_values``."""

    k_values: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float)
        if d.ndim != 2 or d.shape[1] != len(self.k_values):
            raise ValueError("delta must have shape (l_max + 1, n_k)")
        if not np.all(np.isfinite(d)):
            raise ValueError("phase shifts must be finite")
        object.__setattr__(self, "delta", d)

    @property
    def l_max(self) -> int:
        return self.delta.shape[0] - 1

    @classmethod
    def zero(cls, k_values, l_max: int = L_MAX_DEFAULT) -> "PhaseShiftTable":
        return cls(np.asarray(k_values), np.zeros((l_max + 1, len(k_values))))

    def to_csv(self, path):
        rows = [(l, k, d) for l in range(self.l_max + 1) for k, d in zip(self.k_values, self.delta[l])]
        write_csv(path, ["l", "k", "delta_l"], np.array(rows, dtype=float))


def _spherical_logderiv_interior(l: int, q: np.ndarray, a: float) -> np.ndarray:
    """``u'/u`` at ``r = a`` for the regular interior solution ``u = r j_l(q r)``.

    Real for real or purely imaginary ``q``. For large ``|q|`` on the
    evanescent branch the modified-Bessel ratio is used to avoid overflow.
    """
    out = np.empty(q.shape, dtype=float)
    z = q * a
    evan = np.abs(z.imag) > 0
    zr = z[~evan].real
    if zr.size:
        j, jp = spherical_jn(l, zr), spherical_jn(l, zr, derivative=True)
        out[~evan] = 1.0 / a + q[~evan].real * jp / j
    if np.any(evan):
        from scipy.special import ive
        x = np.abs(z[evan].imag)
        # i_l(x) ~ I_{l+1/2}(x); d/dx log(x i_l) = I'_{l+1/2}/I_{l+1/2} + 1/(2x)
        nu = l + 0.5
        ratio = ive(nu + 1, x) / ive(nu, x) + nu / x
        kappa = x / a
        out[evan] = 1.0 / a + kappa * (ratio - 0.5 / x)
    return out


def spherical_well_phase_shifts(V0: float, a: float, l_max: int, grid,
                                units: UnitSystem = NATURAL) -> PhaseShiftTable:
    """Phase shifts of ``V = V0`` for ``r < a`` by matching log-derivatives at ``r = a``.

    ``tan delta_l = (k j_l'(ka) - g j_l(ka)) / (k y_l'(ka) - g y_l(ka))`` with
    ``g = q j_l'(qa)/j_l(qa)`` and ``q`` analytically continued below a
    barrier top. Each ``delta_l(k)`` is unwrapped modulo ``pi`` from the
    largest ``k``, where it is taken in ``(-pi/2, pi/2]``.
    """
    if a <= 0:
        raise ValueError("radius a must be positive")
    k = grid.k_values[grid.k_values > 0] if isinstance(grid, MomentumGrid) else np.asarray(grid, dtype=float)
    if np.any(k <= 0):
        raise ValueError("need k > 0")
    q = np.sqrt(k.astype(complex) ** 2 - 2 * units.mass * V0 / units.hbar**2)
    delta = np.zeros((l_max + 1, k.size))
    if V0 == 0:
        return PhaseShiftTable(k, delta)
    ka = k * a
    for l in range(l_max + 1):
        # log-derivative of u = r j_l(q r) minus 1/r gives q j_l'/j_l
        g = _spherical_logderiv_interior(l, q, a) - 1.0 / a
        j, jp = spherical_jn(l, ka), spherical_jn(l, ka, derivative=True)
        y, yp = spherical_yn(l, ka), spherical_yn(l, ka, derivative=True)
        num = k * jp - g * j
        den = k * yp - g * y
        two_delta = 2 * np.arctan2(num, den)
        delta[l] = 0.5 * _unwrap_period(two_delta)
    return PhaseShiftTable(k, delta)


def channel_factor(delta, eps: float = EPS_REG):
    """``(1 + e^{-2i delta}) / |1 + e^{2i delta}|``, unimodular."""
    d = np.asarray(delta, dtype=float)
    den = np.abs(1 + np.exp(2j * d))
    if np.any(den < eps):
        bad = np.atleast_1d(d)[np.atleast_1d(den) < eps]
        raise RegularizationError(f"|1 + exp(2i delta)| < {eps:g} for delta = {bad.tolist()}", bad)
    out = (1 + np.exp(-2j * d)) / den
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PartialWaveState:
    """Amplitudes ``phi_lm(k)``, shape ``(n_channels, n_k)``, on a positive momentum grid."""

    grid: MomentumGrid
    channels: tuple
    amplitudes: np.ndarray

    def __post_init__(self):
        if not self.grid.is_positive:
            raise ValueError("partial-wave states live on a positive momentum grid")
        a = np.asarray(self.amplitudes, dtype=complex)
        chans = tuple((int(l), int(m)) for l, m in self.channels)
        if a.shape != (len(chans), self.grid.n):
            raise ValueError("amplitudes must have shape (n_channels, n_k)")
        for l, m in chans:
            if l < 0 or abs(m) > l:
                raise ValueError(f"invalid channel (l={l}, m={m})")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "channels", chans)

    def norm(self) -> float:
        return float(np.sum(self.grid.weights * np.abs(self.amplitudes) ** 2))

    def normalize(self) -> "PartialWaveState":
        return PartialWaveState(self.grid, self.channels, self.amplitudes / np.sqrt(self.norm()))

    def evolve(self, t: float, units: UnitSystem = NATURAL) -> "PartialWaveState":
        ph = np.exp(-1j * units.hbar * self.grid.k_values**2 * t / (2 * units.mass))
        return PartialWaveState(self.grid, self.channels, self.amplitudes * ph)

    def channel_norms(self) -> dict:
        return {c: float(np.sum(self.grid.weights * np.abs(a) ** 2)) for c, a in zip(self.channels, self.amplitudes)}

    def tail_norm(self, l_cut: int) -> float:
        """Probability carried by channels with ``l > l_cut``."""
        return sum(v for (l, _), v in self.channel_norms().items() if l > l_cut)

    def to_energy_channels(self, units: UnitSystem = NATURAL) -> EnergyChannels:
        k, E, wE = energy_grid(self.grid, units)
        jac = np.sqrt(units.mass / (units.hbar**2 * k))
        return EnergyChannels(E, wE, self.channels, (self.amplitudes * jac).T, k)


def partial_wave_packet(grid: MomentumGrid, components: dict) -> PartialWaveState:
    """Gaussian radial profiles per channel.

    ``components`` maps ``(l, m)`` to ``(k0, sigma_k, r0, weight)``; the
    profile is ``weight exp(-(k-k0)^2/4 sigma_k^2) exp(-i k r0)``. The state is
    renormalized.
    """
    chans = list(components)
    amps = []
    k = grid.k_values
    for c in chans:
        k0, sk, r0, wt = components[c]
        if not grid.covers(k0 - 6 * sk, k0 + 6 * sk):
            raise ValueError(f"grid does not cover k0 +- 6 sigma_k for channel {c}")
        amps.append(wt * np.exp(-((k - k0) ** 2) / (4 * sk**2) - 1j * k * r0))
    return PartialWaveState(grid, chans, np.array(amps)).normalize()


def _factors(state: PartialWaveState, shifts: PhaseShiftTable) -> np.ndarray:
    k = state.grid.k_values
    if shifts.k_values.size != k.size or not np.allclose(shifts.k_values, k, rtol=1e-12, atol=0):
        raise ValueError("phase-shift table and state use different k grids")
    out = np.empty((len(state.channels), k.size), dtype=complex)
    for j, (l, _) in enumerate(state.channels):
        if l > shifts.l_max:
            raise ValueError(f"no phase shifts for l={l} (table has l_max={shifts.l_max})")
        out[j] = channel_factor(shifts.delta[l])
    return out


def clock_distribution_3d(state: PartialWaveState, shifts: PhaseShiftTable, times,
                          units: UnitSystem = NATURAL) -> TimeDistribution:
    t = np.asarray(times, dtype=float)
    _check_uniform(t)
    k, w = state.grid.k_values, state.grid.weights
    f = _factors(state, shifts)
    coeffs = ((w * np.sqrt(k)) * np.conj(f) * state.amplitudes).T
    A = spectral_sum(t, units.energy(k), coeffs, 1.0, units.hbar)
    vals = units.hbar / (2 * np.pi * units.mass) * np.sum(np.abs(A) ** 2, axis=1)
    return TimeDistribution(t, vals)


def induced_basis(state: PartialWaveState, shifts: PhaseShiftTable, units: UnitSystem = NATURAL) -> KernelBasis:
    """The channel-diagonal basis ``b_lm(E, l'm') = delta f_l(E)`` on the state's channels.

    Dense in ``(l m) x (l' m')``; meant for small channel sets.
    """
    k, E, wE = energy_grid(state.grid, units)
    return KernelBasis.channel_diagonal(E, wE, state.channels, _factors(state, shifts).T)
