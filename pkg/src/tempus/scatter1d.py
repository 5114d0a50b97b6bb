"""Scattering by symmetric one-dimensional potentials and the unique clock kernel.

States are specified by their in-asymptote (free, incoming) amplitudes. The
Moller operator is never built: it is unitary and intertwines ``H`` with
``H0``, so every energy-representation quadratic form can be evaluated on the
in-amplitudes once the parity-channel phases

    c_+-(k) = i^{(1 -+ 1)/2} (1 + conj(T) +- conj(R)) / |1 + T +- R|

are attached.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .kernelcore import KernelBasis
from .state import NATURAL, MomentumGrid, UnitSystem, energy_grid, write_csv

EPS_REG = 1e-6


class RegularizationError(ValueError):
    """``|1 + T +- R|`` too small for the clock phases to be defined."""

    def __init__(self, message, k_values=()):
        super().__init__(message)
        self.k_values = np.asarray(k_values)


class BranchError(ValueError):
    pass


class SignFlipWarning(UserWarning):
    """``1 + T +- R`` vanishes between two grid nodes: the clock phase jumps by pi there."""


@dataclass(frozen=True)
class ScatteringAmplitudes1D:
    k_values: np.ndarray
    T: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k_values, dtype=float)
        if np.any(k <= 0):
            raise ValueError("scattering amplitudes are defined on k > 0")
        object.__setattr__(self, "k_values", k)
        object.__setattr__(self, "T", np.asarray(self.T, dtype=complex))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=complex))

    def unitarity_defect(self) -> float:
        return float(np.max(np.abs(np.abs(self.T) ** 2 + np.abs(self.R) ** 2 - 1)))

    def parity_defect(self) -> float:
        return float(max(np.max(np.abs(np.abs(self.T + self.R) - 1)),
                         np.max(np.abs(np.abs(self.T - self.R) - 1))))

    def to_csv(self, path):
        dp, dm = eigenphase_angles(self)
        write_csv(path, ["k", "reT", "imT", "reR", "imR", "delta_plus", "delta_minus"],
                  np.column_stack([self.k_values, self.T.real, self.T.imag, self.R.real, self.R.imag, dp, dm]))


def _k_nodes(grid):
    if isinstance(grid, MomentumGrid):
        k = grid.k_values[grid.k_values > 0]
    else:
        k = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(k <= 0):
        raise ValueError("need k > 0")
    return k


def delta_potential_amplitudes(strength: float, grid, units: UnitSystem = NATURAL) -> ScatteringAmplitudes1D:
    """``V = g delta(x)``: ``T = 1/(1 + i m g / hbar^2 k)``, ``R = T - 1``."""
    k = _k_nodes(grid)
    beta = units.mass * strength / (units.hbar**2 * k)
    T = 1.0 / (1.0 + 1j * beta)
    return ScatteringAmplitudes1D(k, T, T - 1.0)


def square_well_amplitudes(V0: float, a: float, grid, units: UnitSystem = NATURAL) -> ScatteringAmplitudes1D:
    """``V = V0`` on ``[-a, a]`` (barrier for ``V0 > 0``, well for ``V0 < 0``).

    Interior wavenumber ``q = sqrt(k^2 - 2 m V0 / hbar^2)`` is taken complex
    below the barrier top; the formulas are analytic in ``q`` so the
    evanescent branch needs no special casing. Returned with the incoming wave
    normalized to ``e^{ikx}``, i.e. ``psi = e^{ikx} + R e^{-ikx}`` for
    ``x < -a`` and ``T e^{ikx}`` for ``x > a``.
    """
    if a <= 0:
        raise ValueError("half-width a must be positive")
    k = _k_nodes(grid).astype(complex)
    q = np.sqrt(k**2 - 2 * units.mass * V0 / units.hbar**2 + 0j)
    q = np.where(np.abs(q) < 1e-300, 1e-300, q)
    c, s = np.cos(2 * q * a), np.sin(2 * q * a)
    den = c - 0.5j * (q / k + k / q) * s
    T = np.exp(-2j * k * a) / den
    R = 0.5j * (q / k - k / q) * s * np.exp(-2j * k * a) / den
    return ScatteringAmplitudes1D(k.real, T, R)


def eigenphases(amps: ScatteringAmplitudes1D) -> tuple[np.ndarray, np.ndarray]:
    """``exp(2 i delta_+-) = T +- R``."""
    return amps.T + amps.R, amps.T - amps.R


BRANCH_JUMP = np.pi / 2


def _unwrap_period(two_delta: np.ndarray, check: bool = False) -> np.ndarray:
    """Unwrap ``2 delta`` by continuity starting from the largest ``k`` (principal value there)."""
    rev = np.asarray(two_delta, dtype=float)[::-1]
    steps = np.angle(np.exp(1j * np.diff(rev)))
    if check and steps.size and np.max(np.abs(steps)) > BRANCH_JUMP:
        raise BranchError(f"eigenphase jumps by {np.max(np.abs(steps)):.2f} rad between adjacent k; refine the grid")
    out = np.concatenate([[np.angle(np.exp(1j * rev[0]))], np.angle(np.exp(1j * rev[0])) + np.cumsum(steps)])
    return out[::-1]


def _unwrap_from_top(two_delta: np.ndarray) -> np.ndarray:
    return _unwrap_period(two_delta, check=True)


def eigenphase_angles(amps: ScatteringAmplitudes1D) -> tuple[np.ndarray, np.ndarray]:
    """Continuous ``delta_+(k), delta_-(k)``, anchored at the high-energy end."""
    sp, sm = eigenphases(amps)
    return 0.5 * _unwrap_from_top(np.angle(sp)), 0.5 * _unwrap_from_top(np.angle(sm))


def clock_coefficients(amps: ScatteringAmplitudes1D, eps: float = EPS_REG) -> np.ndarray:
    """``c_+-(k)`` as an array of shape ``(n_k, 2)``."""
    T, R = amps.T, amps.R
    out = np.empty((T.size, 2), dtype=complex)
    bad = []
    for j, (sgn, pref) in enumerate(((1, 1.0), (-1, 1j))):
        den = np.abs(1 + T + sgn * R)
        low = den < eps
        if np.any(low):
            bad.extend(amps.k_values[low].tolist())
        out[:, j] = pref * (1 + np.conj(T) + sgn * np.conj(R)) / np.where(low, 1.0, den)
    if bad:
        raise RegularizationError(
            f"|1 + T +- R| < {eps:g} at k = {sorted(set(bad))}; the clock phases are undefined there",
            sorted(set(bad)))
    return out


def sign_flips(amps: ScatteringAmplitudes1D) -> list[tuple[str, float, float]]:
    """Intervals ``(parity, k_lo, k_hi)`` in which ``cos delta_+-`` changes sign.

    There ``1 + T +- R`` passes through zero off the grid and ``c_+-`` flips
    sign, a discontinuity in energy that gives the time distribution slowly
    decaying tails.
    """
    out = []
    k = amps.k_values
    for label, d in zip("+-", eigenphase_angles(amps)):
        s = np.sign(np.cos(d))
        for j in np.flatnonzero(s[:-1] * s[1:] < 0):
            out.append((label, float(k[j]), float(k[j + 1])))
    return out


def clock_kernel_scattering(amps: ScatteringAmplitudes1D, grid: MomentumGrid,
                            units: UnitSystem = NATURAL) -> KernelBasis:
    """Parity-channel basis of the unique clock kernel, in the in-asymptote representation.

    Feed it to :func:`tempus.kernelcore.time_distribution` together with
    ``to_energy_channels(in_packet)``.
    """
    k, E, wE = energy_grid(grid, units)
    if k.size != amps.k_values.size or not np.allclose(k, amps.k_values, rtol=1e-12, atol=0):
        raise ValueError("scattering amplitudes are not sampled on the grid's positive nodes")
    coeffs = clock_coefficients(amps)
    flips = sign_flips(amps)
    if flips:
        where = ", ".join(f"{p}: ({a:.4g}, {b:.4g})" for p, a, b in flips)
        warnings.warn(SignFlipWarning(f"clock phases jump by pi inside k intervals {where}"), stacklevel=2)
    return KernelBasis.channel_diagonal(E, wE, ("+", "-"), coeffs)


def free_amplitudes(grid) -> ScatteringAmplitudes1D:
    k = _k_nodes(grid)
    return ScatteringAmplitudes1D(k, np.ones(k.size), np.zeros(k.size))


def transmission_probability(amps: ScatteringAmplitudes1D, weights_k) -> float:
    """``sum |T(k)|^2 p(k)`` for a momentum distribution ``p`` on the same nodes."""
    p = np.asarray(weights_k, dtype=float)
    return float(np.sum(np.abs(amps.T) ** 2 * p) / np.sum(p))
