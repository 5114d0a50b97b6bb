"""Covariant time kernels built from channel functions ``b_i(E, alpha)``.

The distribution operator at ``t = 0`` is

    Pi_0 = 1/(2 pi hbar) sum_i |b_i><b_i|,

and it is only ever evaluated as a quadratic form on states given in an
energy-channel representation. Clock kernels are shifted forward under time
evolution, arrival kernels backward.

Summation order (for bit-reproducibility): channel projections
``sum_alpha conj(b_i) phi`` first, then the energy sum as one matrix product
per block of times, then the incoherent sum over ``i``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .state import NATURAL, EnergyChannels, TimeDistribution, UnitSystem, _check_uniform, uniform_derivative

Sense = Literal["clock", "arrival"]

COMPLETENESS_TOL = 1e-8
RANK_CUTOFF = 1e-12


class SpectralError(ValueError):
    """Kernel matrix is not positive semidefinite within tolerance."""


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class KernelBasis:
    """Channel functions with shape ``(n_b, n_E, n_channels)``."""

    E_values: np.ndarray
    weights: np.ndarray
    channels: tuple
    functions: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.functions, dtype=complex)
        if f.ndim != 3 or f.shape[1:] != (len(self.E_values), len(self.channels)):
            raise ValueError(f"functions must have shape (n_b, {len(self.E_values)}, {len(self.channels)})")
        object.__setattr__(self, "functions", f)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def size(self) -> int:
        return self.functions.shape[0]

    @classmethod
    def channel_diagonal(cls, E_values, weights, channels, phases) -> "KernelBasis":
        """One function per channel, ``b_a(E, a') = delta_{a a'} phases[E, a]``."""
        phases = np.asarray(phases, dtype=complex)
        n_e, n_c = phases.shape
        f = np.zeros((n_c, n_e, n_c), dtype=complex)
        for a in range(n_c):
            f[a, :, a] = phases[:, a]
        return cls(E_values, weights, channels, f)

    @classmethod
    def constant(cls, phi: EnergyChannels) -> "KernelBasis":
        """The minimal-variance constant kernel, ``b_a = delta_{a a'}``, on ``phi``'s grid."""
        return cls.channel_diagonal(phi.E_values, phi.weights, phi.channels,
                                    np.ones((len(phi.E_values), len(phi.channels))))

    def with_phase(self, theta: float) -> "KernelBasis":
        return KernelBasis(self.E_values, self.weights, self.channels, self.functions * np.exp(1j * theta))

    def matches(self, phi: EnergyChannels) -> bool:
        return (len(self.E_values) == len(phi.E_values)
                and np.allclose(self.E_values, phi.E_values, rtol=1e-12, atol=0)
                and self.channels == tuple(phi.channels))


@dataclass(frozen=True)
class BasisReport:
    max_deviation: float
    max_smoothness: float

    @property
    def passed(self) -> bool:
        return self.max_deviation < COMPLETENESS_TOL


def validate_kernel_basis(b: KernelBasis, units: UnitSystem = NATURAL) -> BasisReport:
    """Worst deviation of ``sum_i b_i(E,a) conj(b_i(E,a'))`` from ``delta_{a a'}``.

    Also reports ``max_E sum_i |d_E b_i|^2`` as a discrete smoothness proxy.
    """
    gram = np.einsum("iea,ieb->eab", b.functions, np.conj(b.functions))
    eye = np.eye(len(b.channels))
    dev = float(np.max(np.abs(gram - eye[None]))) if b.size else 1.0
    if len(b.E_values) >= 2 and b.size:
        db = energy_derivative(b.functions, b.E_values, units, axis=1)
        smooth = float(np.max(np.sum(np.abs(db) ** 2, axis=(0, 2))))
    else:
        smooth = 0.0
    return BasisReport(dev, smooth)


def _index(b: KernelBasis, E: float, alpha) -> tuple[int, int]:
    hits = np.flatnonzero(np.isclose(b.E_values, E, rtol=1e-12, atol=0))
    if hits.size != 1 or alpha not in b.channels:
        raise GridError(f"(E={E!r}, alpha={alpha!r}) is not a grid point")
    return int(hits[0]), b.channels.index(alpha)


def kernel_element(b: KernelBasis, E, alpha, E2, alpha2, units: UnitSystem = NATURAL) -> complex:
    """``<E,alpha|Pi_0|E2,alpha2> = 1/(2 pi hbar) sum_i b_i(E,alpha) conj(b_i(E2,alpha2))``."""
    e1, a1 = _index(b, E, alpha)
    e2, a2 = _index(b, E2, alpha2)
    val = np.sum(b.functions[:, e1, a1] * np.conj(b.functions[:, e2, a2]))
    return complex(val / (2 * np.pi * units.hbar))


@dataclass(frozen=True)
class KernelMatrix:
    """Dense kernel over the flattened ``(E, alpha)`` index (E-major)."""

    E_values: np.ndarray
    weights: np.ndarray
    channels: tuple
    matrix: np.ndarray

    def __post_init__(self):
        n = len(self.E_values) * len(self.channels)
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (n, n):
            raise ValueError(f"kernel matrix must be {n}x{n}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "channels", tuple(self.channels))


def kernel_matrix(b: KernelBasis, units: UnitSystem = NATURAL) -> KernelMatrix:
    B = b.functions.reshape(b.size, -1).T
    return KernelMatrix(b.E_values, b.weights, b.channels, B @ B.conj().T / (2 * np.pi * units.hbar))


def schmidt_basis(K: KernelMatrix, units: UnitSystem = NATURAL) -> KernelBasis:
    """Channel functions reproducing ``K`` as ``1/(2 pi hbar) sum_i b_i b_i^dagger``.

    Instead of orthogonalizing seed vectors ``g_i`` one after the other, the
    Hermitian eigendecomposition ``K = sum lambda_i u_i u_i^dagger`` is used
    and ``b_i = sqrt(2 pi hbar lambda_i) u_i``; the seeds are then implicit,
    ``g_i = u_i / sqrt(lambda_i)``, and satisfy ``<g_i|K|g_j> = delta_ij``.
    Eigenvalues below ``1e-12 lambda_max`` are treated as zero.
    """
    M = K.matrix
    scale = float(np.max(np.abs(M))) if M.size else 0.0
    if scale and np.max(np.abs(M - M.conj().T)) > 1e-10 * scale:
        raise SpectralError("kernel matrix is not Hermitian")
    n_e, n_c = len(K.E_values), len(K.channels)
    if scale == 0.0:
        return KernelBasis(K.E_values, K.weights, K.channels, np.zeros((0, n_e, n_c)))
    lam, U = np.linalg.eigh(0.5 * (M + M.conj().T))
    lmax = lam[-1]
    if lam[0] < -1e-10 * max(lmax, scale):
        raise SpectralError(f"kernel matrix has a negative eigenvalue {lam[0]:.3e} (lambda_max={lmax:.3e})")
    keep = lam > RANK_CUTOFF * lmax
    lam, U = lam[keep][::-1], U[:, keep][:, ::-1]
    B = U * np.sqrt(2 * np.pi * units.hbar * lam)
    return KernelBasis(K.E_values, K.weights, K.channels, B.T.reshape(-1, n_e, n_c))


def _sign(sense: Sense) -> float:
    if sense == "clock":
        return 1.0
    if sense == "arrival":
        return -1.0
    raise ValueError(f"sense must be 'clock' or 'arrival', got {sense!r}")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("TEMPUS_THREADS", "1")))
    except ValueError:
        return 1


def spectral_sum(t: np.ndarray, E: np.ndarray, coeffs: np.ndarray, sign: float, hbar: float,
                 block: int = 256) -> np.ndarray:
    """``A[t, i] = sum_E exp(sign i E t / hbar) coeffs[E, i]`` by direct summation."""
    t = np.asarray(t, dtype=float)
    coeffs = np.asarray(coeffs, dtype=complex)
    out = np.empty((t.size, coeffs.shape[1]), dtype=complex)
    starts = list(range(0, t.size, block))

    def work(s):
        sl = slice(s, s + block)
        out[sl] = np.exp(sign * 1j * np.outer(t[sl], E) / hbar) @ coeffs

    n_thr = _threads()
    if n_thr > 1 and len(starts) > 1:
        with ThreadPoolExecutor(n_thr) as ex:
            list(ex.map(work, starts))
    else:
        for s in starts:
            work(s)
    return out


def channel_projections(b: KernelBasis, phi: EnergyChannels) -> np.ndarray:
    """``c[E, i] = sum_alpha conj(b_i(E, alpha)) phi(E, alpha)``."""
    return np.einsum("iea,ea->ei", np.conj(b.functions), phi.amplitudes)


def time_distribution(b: KernelBasis, phi: EnergyChannels, times, sense: Sense = "clock",
                      units: UnitSystem = NATURAL, validate: bool = True) -> TimeDistribution:
    """``Pi(t) = 1/(2 pi hbar) sum_i |sum_{E,alpha} w_E e^{s E t/hbar} conj(b_i) phi|^2``.

    ``s = +i`` for a clock, ``-i`` for arrivals.
    """
    sign = _sign(sense)
    if not b.matches(phi):
        raise GridError("kernel basis and state live on different energy grids/channels")
    if validate:
        rep = validate_kernel_basis(b, units)
        if not rep.passed:
            raise ValueError(f"kernel basis violates channel completeness (deviation {rep.max_deviation:.2e})")
    t = np.asarray(times, dtype=float)
    _check_uniform(t)
    coeffs = phi.weights[:, None] * channel_projections(b, phi)
    amp = spectral_sum(t, phi.E_values, coeffs, sign, units.hbar)
    vals = np.sum(np.abs(amp) ** 2, axis=1) / (2 * np.pi * units.hbar)
    return TimeDistribution(t, vals)


def cumulative(dist: TimeDistribution, tau: float) -> float:
    """Trapezoid integral of ``Pi`` from the first node up to ``tau`` (linear in between)."""
    t, v = dist.t_values, dist.values
    if not (t[0] <= tau <= t[-1]):
        raise ValueError(f"tau={tau} outside the time window [{t[0]}, {t[-1]}]")
    cum = dist.cumulative_values()
    j = min(int(np.searchsorted(t, tau, side="right")) - 1, t.size - 2)
    h = tau - t[j]
    slope = (v[j + 1] - v[j]) / (t[j + 1] - t[j])
    return float(cum[j] + h * v[j] + 0.5 * slope * h * h)


def energy_derivative(f: np.ndarray, E: np.ndarray, units: UnitSystem = NATURAL, axis: int = 0) -> np.ndarray:
    """``d f / dE`` on a grid uniform in ``k``: centered differences in ``k`` times ``m / hbar^2 k``.

    Eighth-order stencils, one-sided at the grid ends. Falls back to
    second-order non-uniform differences if ``k`` is not uniform.
    """
    k = units.wavenumber(E)
    dk = np.diff(k)
    if k.size >= 5 and np.ptp(dk) <= 1e-9 * abs(dk[0]):
        df = uniform_derivative(f, float(np.mean(dk)), axis=axis)
    else:
        df = np.gradient(f, k, axis=axis)
    shape = [1] * np.ndim(f)
    shape[axis] = -1
    return df * (units.mass / (units.hbar**2 * k)).reshape(shape)


STEP_LIMIT = 0.5


def check_resolution(phi: EnergyChannels, units: UnitSystem = NATURAL):
    """Refuse finite differences when the state moves too far between adjacent nodes.

    The step ``|phi(E_j+1) - phi(E_j)|`` is measured against the channel's
    largest modulus, so interference nodes (where the phase legitimately
    swings fast through a near-zero) are not mistaken for undersampling.
    """
    a = phi.amplitudes
    scale = np.max(np.abs(a), axis=0)
    live = scale > 0
    if not np.any(live):
        return
    step = np.max(np.abs(np.diff(a, axis=0)), axis=0)
    worst = float(np.max(step[live] / scale[live]))
    if worst > STEP_LIMIT:
        raise GridError(f"energy grid too coarse for finite differences: adjacent nodes differ by {worst:.2f} "
                        f"of the peak amplitude (limit {STEP_LIMIT}); refine the momentum grid")


def mean_time(b: KernelBasis, phi: EnergyChannels, sense: Sense = "clock",
              units: UnitSystem = NATURAL) -> float:
    """Spectral first moment of the normalized distribution.

    Clock: ``int dE sum_a conj(phi) i hbar d_E phi
    + int dE sum_{a a'} conj(phi_a) phi_a' sum_i b_i(E,a) i hbar d_E conj(b_i(E,a'))``.
    The arrival mean is the negative of the clock mean.
    """
    sign = _sign(sense)
    if not b.matches(phi):
        raise GridError("kernel basis and state live on different energy grids/channels")
    check_resolution(phi, units)
    hb = units.hbar
    psi = phi.amplitudes
    dpsi = energy_derivative(psi, phi.E_values, units)
    first = np.sum(phi.weights[:, None] * np.conj(psi) * 1j * hb * dpsi)
    dbc = energy_derivative(np.conj(b.functions), b.E_values, units, axis=1)
    A = np.einsum("iea,ieb->eab", b.functions, dbc) * 1j * hb
    second = np.sum(phi.weights * np.einsum("ea,eab,eb->e", np.conj(psi), A, psi))
    total = first + second
    return float(sign * total.real)


def second_moment(b: KernelBasis, phi: EnergyChannels, units: UnitSystem = NATURAL) -> float:
    """``hbar^2 sum_i int dE |d_E sum_alpha conj(b_i) phi|^2`` (same for both senses)."""
    if not b.matches(phi):
        raise GridError("kernel basis and state live on different energy grids/channels")
    check_resolution(phi, units)
    proj = channel_projections(b, phi)
    d = energy_derivative(proj, phi.E_values, units)
    return float(units.hbar**2 * np.sum(phi.weights[:, None] * np.abs(d) ** 2))


def variance(b: KernelBasis, phi: EnergyChannels, units: UnitSystem = NATURAL) -> float:
    mu = mean_time(b, phi, "clock", units)
    return second_moment(b, phi, units) - mu**2


def auto_window(b: KernelBasis, phi: EnergyChannels, sense: Sense = "clock", units: UnitSystem = NATURAL,
                n_sigma: float = 8.0, n: int = 2001) -> np.ndarray:
    """Time grid spanning ``mean +- n_sigma`` standard deviations, from the spectral moments."""
    mu = mean_time(b, phi, sense, units)
    var = second_moment(b, phi, units) - mu**2
    sd = np.sqrt(max(var, 0.0))
    if not sd > 0:
        raise ValueError("could not estimate a temporal spread for the state")
    return np.linspace(mu - n_sigma * sd, mu + n_sigma * sd, n)


def momentum_kernel(b: KernelBasis, k_signed: np.ndarray, units: UnitSystem = NATURAL) -> np.ndarray:
    """``<s k|Pi_0|s' k'>`` as a density in signed momentum, for parity-channel bases.

    Uses ``|E,+> = sqrt(m/hbar^2 k)(|k> + |-k>)/sqrt2`` and
    ``|E,-> = i sqrt(m/hbar^2 k)(|k> - |-k>)/sqrt2``. ``k_signed`` must be the
    symmetric grid whose positive half generated ``b.E_values``.
    """
    if b.channels != ("+", "-"):
        raise ValueError("momentum kernel needs the parity channels ('+', '-')")
    k_pos = units.wavenumber(b.E_values)
    n = k_pos.size
    if k_signed.size != 2 * n or not np.allclose(k_signed[n:], k_pos):
        raise GridError("signed momentum grid does not match the energy grid")
    r = np.sqrt(0.5)
    # beta_i(s, k) = sum_a b_i(E,a) <s k|E,a> without the Jacobian
    beta_pos = r * (b.functions[:, :, 0] + 1j * b.functions[:, :, 1])
    beta_neg = r * (b.functions[:, :, 0] - 1j * b.functions[:, :, 1])
    beta = np.concatenate([beta_neg[:, ::-1], beta_pos], axis=1)
    kabs = np.abs(k_signed)
    pref = units.hbar / (2 * np.pi * units.mass)
    return pref * np.sqrt(np.outer(kabs, kabs)) * (beta.T @ beta.conj())


def free_momentum_kernel(k_signed: np.ndarray, units: UnitSystem = NATURAL) -> np.ndarray:
    """Free one-dimensional kernel ``hbar/(2 pi m) sqrt(k k') [same sign of k, k']``."""
    kabs = np.abs(k_signed)
    same = np.sign(k_signed)[:, None] == np.sign(k_signed)[None, :]
    return units.hbar / (2 * np.pi * units.mass) * np.sqrt(np.outer(kabs, kabs)) * same


def basis_to_csv(b: KernelBasis, path):
    rows = []
    for i in range(b.size):
        for e, E in enumerate(b.E_values):
            for a, lab in enumerate(b.channels):
                z = b.functions[i, e, a]
                rows.append(f"{float(E)!r},{lab},{i},{float(z.real)!r},{float(z.imag)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# E,alpha,i,re,im\n" + "\n".join(rows) + "\n")


def basis_from_csv(path, weights=None) -> KernelBasis:
    """Reads :func:`basis_to_csv` output. Weights default to ones (not stored in the file)."""
    Es, labs, idx, vals = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for ln in fh:
            if ln.startswith("#") or not ln.strip():
                continue
            E, lab, i, re_, im_ = ln.strip().split(",")
            Es.append(float(E))
            labs.append(lab)
            idx.append(int(i))
            vals.append(complex(float(re_), float(im_)))
    E_values = np.array(sorted(set(Es)))
    channels = tuple(dict.fromkeys(labs))
    f = np.zeros((max(idx) + 1, E_values.size, len(channels)), dtype=complex)
    for E, lab, i, z in zip(Es, labs, idx, vals):
        f[i, np.searchsorted(E_values, E), channels.index(lab)] = z
    w = np.ones(E_values.size) if weights is None else np.asarray(weights)
    return KernelBasis(E_values, w, channels, f)
