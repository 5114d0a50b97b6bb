"""Momentum grids, wave packets, free evolution and the energy-channel representation.

States live on a uniform momentum grid with a half-step offset, so that
``k = 0`` is never a node and the energy Jacobian ``sqrt(m / hbar^2 k)`` is
finite everywhere. Quadrature is the plain uniform rule ``w_j = dk``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class UnitSystem:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError(f"hbar and mass must be positive, got {self}")

    def energy(self, k):
        return self.hbar**2 * np.asarray(k) ** 2 / (2.0 * self.mass)

    def wavenumber(self, E):
        return np.sqrt(2.0 * self.mass * np.asarray(E)) / self.hbar


NATURAL = UnitSystem()


@dataclass(frozen=True)
class MomentumGrid:
    k_values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k_values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if k.ndim != 1 or k.shape != w.shape or k.size < 2:
            raise ValueError("k_values and weights must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(k) <= 0):
            raise ValueError("k_values must be strictly increasing")
        if np.any(w <= 0):
            raise ValueError("quadrature weights must be positive")
        if np.any(np.abs(k) < 1e-12 * np.max(np.abs(k))):
            raise ValueError("k = 0 must not be a grid node")
        object.__setattr__(self, "k_values", k)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, kmin: float, kmax: float, n: int) -> "MomentumGrid":
        """Midpoint nodes ``kmin + (j + 1/2) dk`` on ``[kmin, kmax]``."""
        if not kmax > kmin or n < 2:
            raise ValueError("need kmax > kmin and n >= 2")
        dk = (kmax - kmin) / n
        k = kmin + (np.arange(n) + 0.5) * dk
        return cls(k, np.full(n, dk))

    @classmethod
    def symmetric(cls, kmax: float, n: int) -> "MomentumGrid":
        if n % 2:
            raise ValueError("a symmetric grid needs an even number of nodes")
        return cls.uniform(-kmax, kmax, n)

    @property
    def n(self) -> int:
        return self.k_values.size

    @property
    def spacing(self) -> float:
        return float(self.k_values[1] - self.k_values[0])

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.k_values, -self.k_values[::-1], rtol=0, atol=1e-12 * self.k_values[-1]))

    @property
    def is_positive(self) -> bool:
        return bool(self.k_values[0] > 0)

    def covers(self, lo: float, hi: float) -> bool:
        return bool(self.k_values[0] <= lo and self.k_values[-1] >= hi)


@dataclass(frozen=True)
class WavePacket:
    grid: MomentumGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != self.grid.k_values.shape:
            raise ValueError("amplitudes must match the grid")
        object.__setattr__(self, "amplitudes", a)

    @property
    def k(self) -> np.ndarray:
        return self.grid.k_values

    def norm(self) -> float:
        return float(np.sum(self.grid.weights * np.abs(self.amplitudes) ** 2))

    def normalize(self) -> "WavePacket":
        nrm = self.norm()
        if nrm <= 0:
            raise ValueError("cannot normalize a zero packet")
        return WavePacket(self.grid, self.amplitudes / np.sqrt(nrm))

    def inner(self, other: "WavePacket") -> complex:
        if other.grid is not self.grid and not np.array_equal(other.k, self.k):
            raise ValueError("packets live on different grids")
        return complex(np.sum(self.grid.weights * np.conj(self.amplitudes) * other.amplitudes))

    def mean_momentum(self) -> float:
        return float(np.sum(self.grid.weights * self.k * np.abs(self.amplitudes) ** 2) / self.norm())

    def reflected(self) -> "WavePacket":
        """``psi(k) -> psi(-k)``, i.e. ``x -> -x``. Needs a symmetric grid."""
        if not self.grid.is_symmetric:
            raise ValueError("reflection needs a symmetric grid")
        return WavePacket(self.grid, self.amplitudes[::-1].copy())

    def conjugated(self) -> "WavePacket":
        return WavePacket(self.grid, np.conj(self.amplitudes))

    def time_reversed(self) -> "WavePacket":
        """Anti-unitary time reversal ``psi(k) -> conj(psi(-k))``."""
        return self.reflected().conjugated()

    def __add__(self, other: "WavePacket") -> "WavePacket":
        return WavePacket(self.grid, self.amplitudes + other.amplitudes)

    def __mul__(self, c) -> "WavePacket":
        return WavePacket(self.grid, c * self.amplitudes)

    __rmul__ = __mul__


@dataclass(frozen=True)
class GaussianComponent:
    k0: float
    sigma_k: float
    x0: float = 0.0
    weight: complex = 1.0


def _gaussian_profile(k, c: GaussianComponent):
    return np.exp(-((k - c.k0) ** 2) / (4.0 * c.sigma_k**2) - 1j * k * c.x0)


def gaussian_packet(grid: MomentumGrid, k0: float, sigma_k: float, x0: float = 0.0) -> WavePacket:
    """Normalized Gaussian ``exp(-(k-k0)^2 / 4 sigma_k^2) exp(-i k x0)``.

    Raises ValueError when the grid does not span ``k0 +- 6 sigma_k``.
    """
    return superposition(grid, [GaussianComponent(k0, sigma_k, x0)])


def superposition(grid: MomentumGrid, components: Sequence[GaussianComponent],
                  positive_only: bool = False) -> WavePacket:
    """Weighted sum of Gaussians, renormalized.

    With ``positive_only`` the amplitudes at ``k < 0`` are set to zero exactly,
    which is how purely right-moving (backflow) states are prepared.
    """
    if not components:
        raise ValueError("need at least one component")
    amp = np.zeros(grid.n, dtype=complex)
    for c in components:
        if c.sigma_k <= 0:
            raise ValueError("sigma_k must be positive")
        if not grid.covers(c.k0 - 6 * c.sigma_k, c.k0 + 6 * c.sigma_k):
            raise ValueError(
                f"grid [{grid.k_values[0]:g}, {grid.k_values[-1]:g}] does not cover "
                f"k0 +- 6 sigma_k = [{c.k0 - 6 * c.sigma_k:g}, {c.k0 + 6 * c.sigma_k:g}]"
            )
        amp += c.weight * _gaussian_profile(grid.k_values, c) / (2 * np.pi * c.sigma_k**2) ** 0.25
    if positive_only:
        amp[grid.k_values < 0] = 0.0
    return WavePacket(grid, amp).normalize()


def free_evolve(packet: WavePacket, t: float, units: UnitSystem = NATURAL) -> WavePacket:
    phase = np.exp(-1j * units.hbar * packet.k**2 * t / (2.0 * units.mass))
    return WavePacket(packet.grid, packet.amplitudes * phase)


def translate(packet: WavePacket, a: float) -> WavePacket:
    """Shift the packet by ``+a`` in position: ``psi(k) -> exp(-i k a) psi(k)``."""
    return WavePacket(packet.grid, packet.amplitudes * np.exp(-1j * packet.k * a))


def position_amplitude(packet: WavePacket, x, t=0.0, units: UnitSystem = NATURAL, chunk: int = 512):
    """``psi(x, t)`` by direct quadrature of the inverse Fourier integral.

    ``x`` and ``t`` broadcast against each other; the result has their
    broadcast shape.
    """
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    shape = x.shape
    xf, tf = x.ravel(), t.ravel()
    k, wpsi = packet.k, packet.grid.weights * packet.amplitudes
    out = np.empty(xf.size, dtype=complex)
    for s in range(0, xf.size, chunk):
        sl = slice(s, s + chunk)
        ph = np.exp(1j * np.outer(xf[sl], k) - 1j * units.hbar * np.outer(tf[sl], k**2) / (2 * units.mass))
        out[sl] = ph @ wpsi
    return (out / np.sqrt(2 * np.pi)).reshape(shape)


def position_derivative(packet: WavePacket, x, t=0.0, units: UnitSystem = NATURAL):
    """``d psi / dx`` at ``(x, t)``."""
    dpk = WavePacket(packet.grid, 1j * packet.k * packet.amplitudes)
    return position_amplitude(dpk, x, t, units)


DERIV_ORDER = 8


@lru_cache(maxsize=None)
def _stencil(offsets: tuple) -> np.ndarray:
    """First-derivative weights on integer ``offsets`` (exact for polynomials of degree < len)."""
    x = np.array(offsets, dtype=float)
    V = np.vander(x, increasing=True).T
    rhs = np.zeros(len(x))
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs)


def uniform_derivative(f, h: float, axis: int = 0, order: int = DERIV_ORDER):
    """Centered differences of the given (even) order on a uniform grid, one-sided near the ends."""
    f = np.moveaxis(np.asarray(f), axis, 0)
    n = f.shape[0]
    half = order // 2
    if n < order + 1:
        return np.moveaxis(np.gradient(f, h, axis=0), 0, axis)
    d = np.zeros_like(f, dtype=np.result_type(f, float))
    w = _stencil(tuple(range(-half, half + 1)))
    for j, c in enumerate(w):
        if c != 0:
            d[half:n - half] += c * f[j:n - 2 * half + j]
    for i in range(half):
        wl = _stencil(tuple(range(-i, order + 1 - i)))
        d[i] = np.tensordot(wl, f[:order + 1], axes=(0, 0))
        wr = _stencil(tuple(range(-(order - i), i + 1)))
        d[n - 1 - i] = np.tensordot(wr, f[n - 1 - order:], axes=(0, 0))
    return np.moveaxis(d / h, 0, axis)


def mean_position(packet: WavePacket, t: float = 0.0, units: UnitSystem = NATURAL) -> float:
    """``<x>`` from the momentum representation, ``x = i d/dk``."""
    psi = free_evolve(packet, t, units).amplitudes
    dpsi = uniform_derivative(psi, packet.grid.spacing)
    val = np.sum(packet.grid.weights * np.conj(psi) * 1j * dpsi)
    return float(val.real / packet.norm())


@dataclass(frozen=True)
class EnergyChannels:
    """Amplitudes ``psi(E, alpha)`` with shape ``(n_E, n_channels)``."""

    E_values: np.ndarray
    weights: np.ndarray
    channels: tuple
    amplitudes: np.ndarray
    k_values: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (len(self.E_values), len(self.channels)):
            raise ValueError(f"amplitudes shape {a.shape} does not match grid/channels")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "channels", tuple(self.channels))

    def norm(self) -> float:
        return float(np.sum(self.weights[:, None] * np.abs(self.amplitudes) ** 2))

    def evolve(self, t: float, units: UnitSystem = NATURAL) -> "EnergyChannels":
        ph = np.exp(-1j * self.E_values * t / units.hbar)
        return EnergyChannels(self.E_values, self.weights, self.channels,
                              self.amplitudes * ph[:, None], self.k_values)

    def same_grid(self, other) -> bool:
        return (len(self.E_values) == len(other.E_values)
                and np.allclose(self.E_values, other.E_values, rtol=1e-13, atol=0)
                and tuple(self.channels) == tuple(other.channels))


PARITY_CHANNELS = ("+", "-")


def energy_grid(grid: MomentumGrid, units: UnitSystem = NATURAL):
    """Positive-k nodes, their energies and energy weights ``(hbar^2 k / m) w_k``."""
    pos = grid.k_values > 0
    k = grid.k_values[pos]
    return k, units.energy(k), units.hbar**2 * k / units.mass * grid.weights[pos]


def to_energy_channels(packet: WavePacket, units: UnitSystem = NATURAL) -> EnergyChannels:
    """Map ``psi(k)`` onto the parity channels ``|E, +>`` and ``|E, ->``.

    With ``|k,+> = (|k> + |-k>)/sqrt2`` and ``|k,-> = i(|k> - |-k>)/sqrt2``
    the channel amplitudes are ``psi_+ = (psi(k) + psi(-k))/sqrt2`` and
    ``psi_- = -i (psi(k) - psi(-k))/sqrt2``; both carry the Jacobian
    ``sqrt(m / hbar^2 k)``. Positive-only grids are treated as ``psi(-k) = 0``.
    """
    grid = packet.grid
    k, E, wE = energy_grid(grid, units)
    pos_amp = packet.amplitudes[grid.k_values > 0]
    if grid.is_symmetric:
        neg_amp = packet.amplitudes[grid.k_values < 0][::-1]
    elif grid.is_positive:
        neg_amp = np.zeros_like(pos_amp)
    else:
        raise ValueError("energy channels need a symmetric or a positive-only momentum grid")
    jac = np.sqrt(units.mass / (units.hbar**2 * k))
    plus = jac * (pos_amp + neg_amp) / np.sqrt(2)
    minus = -1j * jac * (pos_amp - neg_amp) / np.sqrt(2)
    return EnergyChannels(E, wE, PARITY_CHANNELS, np.stack([plus, minus], axis=1), k)


def from_energy_channels(phi: EnergyChannels, grid: MomentumGrid, units: UnitSystem = NATURAL) -> WavePacket:
    """Inverse of :func:`to_energy_channels` on a symmetric grid."""
    k, E, _ = energy_grid(grid, units)
    if not np.allclose(E, phi.E_values):
        raise ValueError("energy grid does not match momentum grid")
    inv = np.sqrt(units.hbar**2 * k / units.mass)
    plus, minus = phi.amplitudes[:, 0] * inv, phi.amplitudes[:, 1] * inv
    pos = (plus + 1j * minus) / np.sqrt(2)
    neg = (plus - 1j * minus) / np.sqrt(2)
    amp = np.concatenate([neg[::-1], pos]) if grid.is_symmetric else pos
    return WavePacket(grid, amp)


def time_grid(tmin: float, tmax: float, n: int) -> np.ndarray:
    if not tmax > tmin or n < 3:
        raise ValueError("need tmax > tmin and at least 3 time nodes")
    return np.linspace(tmin, tmax, n)


def _check_uniform(t: np.ndarray):
    if t.ndim != 1 or t.size < 2:
        raise ValueError("time grid must be 1-D with at least two nodes")
    dt = np.diff(t)
    if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * abs(dt[0]) * t.size:
        raise ValueError("time grid must be uniform and increasing")


@dataclass(frozen=True)
class TimeDistribution:
    """Sampled ``Pi(t)`` (units 1/time) on a uniform time grid."""

    t_values: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_values, dtype=float)
        v = np.asarray(self.values, dtype=float)
        _check_uniform(t)
        if v.shape != t.shape:
            raise ValueError("values must match the time grid")
        object.__setattr__(self, "t_values", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.t_values[1] - self.t_values[0])

    def total(self) -> float:
        return float(np.trapezoid(self.values, self.t_values))

    def cumulative_values(self) -> np.ndarray:
        from scipy.integrate import cumulative_trapezoid
        return cumulative_trapezoid(self.values, self.t_values, initial=0.0)

    def moment(self, n: int) -> float:
        return float(np.trapezoid(self.t_values**n * self.values, self.t_values))

    def mean(self) -> float:
        return self.moment(1) / self.total()

    def variance(self) -> float:
        tot = self.total()
        mu = self.moment(1) / tot
        return self.moment(2) / tot - mu**2

    def peak_time(self) -> float:
        """Location of the maximum, refined by a parabola through the top three samples."""
        j = int(np.argmax(self.values))
        if 0 < j < self.values.size - 1:
            y0, y1, y2 = self.values[j - 1:j + 2]
            den = y0 - 2 * y1 + y2
            if den != 0:
                return float(self.t_values[j] + 0.5 * self.dt * (y0 - y2) / den)
        return float(self.t_values[j])

    def scaled(self, c: float) -> "TimeDistribution":
        return TimeDistribution(self.t_values, c * self.values)

    def to_csv(self, path, metadata: dict | None = None):
        cols = np.column_stack([self.t_values, self.values, self.cumulative_values()])
        write_csv(path, ["t", "pi", "cumulative"], cols, metadata)


def write_csv(path, columns: Sequence[str], data, metadata: dict | None = None):
    """Headered CSV: ``#``-prefixed metadata lines, then ``# col1,col2,...``."""
    lines = [f"# {key}: {val}" for key, val in (metadata or {}).items()]
    lines.append("# " + ",".join(columns))
    for row in np.asarray(data):
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Returns ``(columns, data)`` for files written by :func:`write_csv`."""
    with open(path, encoding="utf-8") as fh:
        comments = [ln for ln in fh if ln.startswith("#")]
    columns = [c.strip() for c in comments[-1][1:].split(",")]
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return columns, data


def packet_csv(packet: WavePacket, path, x=None, t: float = 0.0, units: UnitSystem = NATURAL):
    """``|psi(k)|^2`` export, or ``|psi(x, t)|^2`` when ``x`` is given."""
    if x is None:
        write_csv(path, ["k", "density"], np.column_stack([packet.k, np.abs(packet.amplitudes) ** 2]))
    else:
        x = np.asarray(x, dtype=float)
        dens = np.abs(position_amplitude(packet, x, t, units)) ** 2
        write_csv(path, ["x", "density"], np.column_stack([x, dens]), {"t": repr(float(t))})
