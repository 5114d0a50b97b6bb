"""Detection by a complex absorbing potential, conditional and operator-normalized arrivals.

The detector is an imaginary potential ``-i V_I(x)``. Its absorption rate is
the (non-normalized) first-arrival distribution; absorbed amplitude never
comes back, so re-arrivals are removed by construction.

Propagation uses second-order Strang splitting on a periodic FFT grid,

    psi -> K(dt/2) P(dt) K(dt/2) psi,  P = exp(-i V dt/hbar) exp(-V_I |dt|/hbar),

and the rate attached to step ``n`` (time ``(n + 1/2) dt``) is the probability
removed by ``P`` divided by ``|dt|``. It converges to ``(2/hbar)<V_I>`` and
makes the bookkeeping ``absorbed + surviving = initial`` exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .state import NATURAL, TimeDistribution, UnitSystem, WavePacket, position_amplitude

STABILITY_BOUND = 0.1
POINTS_PER_WAVELENGTH = 8
OVERLAP_TOL = 1e-8
EPS_N = 1e-6
TAIL_WARN = 1e-3


class NumericalPolicyError(ValueError):
    """A stability, resolution or regularization bound is violated."""


class AbsorberOverlapError(NumericalPolicyError):
    pass


class NoArrivalError(ValueError):
    pass


class TruncationWarning(UserWarning):
    def __init__(self, message, tail_estimate):
        super().__init__(message)
        self.tail_estimate = tail_estimate


@dataclass(frozen=True)
class SpatialGrid:
    x_values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_values, dtype=float)
        n = x.size
        if n < 2 or n & (n - 1):
            raise ValueError(f"spatial grid size must be a power of two, got {n}")
        dx = np.diff(x)
        if np.any(dx <= 0) or np.ptp(dx) > 1e-9 * dx[0]:
            raise ValueError("spatial grid must be uniform and increasing")
        object.__setattr__(self, "x_values", x)

    @classmethod
    def centered(cls, length: float, n: int) -> "SpatialGrid":
        """Nodes ``(j - n/2) dx``: ``x -> -x`` maps the grid onto itself (periodically)."""
        dx = length / n
        return cls((np.arange(n) - n // 2) * dx)

    @property
    def n(self) -> int:
        return self.x_values.size

    @property
    def dx(self) -> float:
        return float(self.x_values[1] - self.x_values[0])

    @property
    def k_values(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, self.dx)

    def reflect(self, f: np.ndarray) -> np.ndarray:
        """``f(-x)`` on a centered grid."""
        if abs(self.x_values[self.n // 2]) > 1e-12 * self.dx:
            raise ValueError("reflection needs a centered grid")
        return np.roll(f[..., ::-1], 1, axis=-1)


@dataclass(frozen=True)
class AbsorberConfig:
    """Smooth bump ``V_I = strength (1 - u^2)^power``, ``u = (x - center)/half_width``, zero for ``|u| >= 1``."""

    center: float = 0.0
    half_width: float = 2.0
    strength: float = 10.0
    power: int = 4

    def __post_init__(self):
        if not self.strength > 0:
            raise ValueError("absorber strength must be positive")
        if not self.half_width > 0:
            raise ValueError("absorber half-width must be positive")
        if int(self.power) != self.power or self.power < 2:
            raise ValueError("absorber power must be an integer >= 2")

    def profile(self, x) -> np.ndarray:
        u = (np.asarray(x, dtype=float) - self.center) / self.half_width
        return np.where(np.abs(u) < 1, self.strength * np.clip(1 - u * u, 0, None) ** self.power, 0.0)

    def support(self) -> tuple[float, float]:
        return self.center - self.half_width, self.center + self.half_width


def square_barrier(sgrid: SpatialGrid, V0: float, a: float, center: float = 0.0) -> np.ndarray:
    """``V0`` on ``|x - center| < a``; a node exactly on an edge gets ``V0/2``."""
    d = np.abs(sgrid.x_values - center)
    tol = 1e-12 * max(a, sgrid.dx)
    return np.where(d < a - tol, V0, np.where(np.abs(d - a) <= tol, 0.5 * V0, 0.0))


def synthesize(packet: WavePacket, sgrid: SpatialGrid, units: UnitSystem = NATURAL) -> np.ndarray:
    """Sample ``psi(x, 0)`` on the spatial grid."""
    return position_amplitude(packet, sgrid.x_values, 0.0, units)


@dataclass(frozen=True)
class PropagationResult:
    times: np.ndarray            # step midpoints, in propagation order
    rate: np.ndarray             # absorbed probability per unit time
    rate_instantaneous: np.ndarray  # (2/hbar)<V_I> at the midpoint state
    norm: np.ndarray             # norm after each step, norm[0] = initial
    final: np.ndarray
    dt: float
    cross_rates: np.ndarray | None = field(default=None, repr=False)

    @property
    def absorbed(self) -> float:
        return float(np.sum(self.rate) * abs(self.dt))


def _significant_kmax(psi: np.ndarray, sgrid: SpatialGrid) -> float:
    spec = np.abs(np.fft.fft(psi, axis=-1)) ** 2
    spec = spec.reshape(-1, sgrid.n).sum(axis=0)
    sig = spec > 1e-12 * spec.max()
    return float(np.max(np.abs(sgrid.k_values[sig])))


def check_policy(psi: np.ndarray, sgrid: SpatialGrid, V: np.ndarray, absorber, dt: float,
                 units: UnitSystem = NATURAL):
    vmax = float(np.max(np.abs(V))) if V is not None else 0.0
    if absorber is not None:
        vmax = max(vmax, absorber.strength)
    if abs(dt) * vmax / units.hbar >= STABILITY_BOUND:
        raise NumericalPolicyError(
            f"time step too large: |dt| max|V| / hbar = {abs(dt) * vmax / units.hbar:.3g} >= {STABILITY_BOUND}")
    kmax = _significant_kmax(psi, sgrid)
    if kmax > 0 and sgrid.dx > 2 * np.pi / (POINTS_PER_WAVELENGTH * kmax):
        raise NumericalPolicyError(
            f"spatial grid too coarse: dx = {sgrid.dx:.4g} exceeds lambda/{POINTS_PER_WAVELENGTH} "
            f"= {2 * np.pi / (POINTS_PER_WAVELENGTH * kmax):.4g} at k = {kmax:.3g}")
    if absorber is not None:
        lo, hi = absorber.support()
        inside = (sgrid.x_values > lo) & (sgrid.x_values < hi)
        dens = np.abs(psi.reshape(-1, sgrid.n)) ** 2
        frac = np.max(dens[:, inside].sum(axis=1) / dens.sum(axis=1))
        if frac > OVERLAP_TOL:
            raise AbsorberOverlapError(f"initial state overlaps the absorber: fraction {frac:.2e} > {OVERLAP_TOL:g}")


def _as_array(psi0, sgrid, units):
    if isinstance(psi0, WavePacket):
        return synthesize(psi0, sgrid, units)
    if isinstance(psi0, (list, tuple)):
        return np.array([_as_array(p, sgrid, units) for p in psi0])
    arr = np.asarray(psi0, dtype=complex)
    if arr.shape[-1] != sgrid.n:
        raise ValueError("state does not match the spatial grid")
    return arr


def _propagate(psi: np.ndarray, sgrid: SpatialGrid, V, absorber, dt: float, n_steps: int,
               units: UnitSystem, cross: bool):
    x = sgrid.x_values
    V = np.zeros(sgrid.n) if V is None else np.asarray(V, dtype=float)
    VI = absorber.profile(x) if absorber is not None else np.zeros(sgrid.n)
    half_kin = np.exp(-1j * units.hbar * sgrid.k_values**2 * dt / (4 * units.mass))
    pot = np.exp(-1j * V * dt / units.hbar - VI * abs(dt) / units.hbar)
    loss = 1.0 - np.exp(-2 * VI * abs(dt) / units.hbar)
    dx = sgrid.dx
    batch = psi.ndim == 2
    psi = psi.copy() if batch else psi[None, :].copy()
    M = psi.shape[0]
    n0 = np.sum(np.abs(psi) ** 2, axis=1) * dx
    norms = np.empty((n_steps + 1, M))
    norms[0] = n0
    rates = np.empty((n_steps, M))
    inst = np.empty((n_steps, M))
    xr = np.empty((n_steps, M, M), dtype=complex) if cross else None
    for n in range(n_steps):
        chi = np.fft.ifft(half_kin * np.fft.fft(psi, axis=1), axis=1)
        dens = np.abs(chi) ** 2
        rates[n] = dens @ loss * dx / abs(dt)
        inst[n] = 2.0 / units.hbar * (dens @ VI) * dx
        if cross:
            xr[n] = (np.conj(chi) * loss) @ chi.T * dx / abs(dt)
        psi = np.fft.ifft(half_kin * np.fft.fft(pot * chi, axis=1), axis=1)
        norms[n + 1] = np.sum(np.abs(psi) ** 2, axis=1) * dx
    times = (np.arange(n_steps) + 0.5) * dt
    if not batch:
        return times, rates[:, 0], inst[:, 0], norms[:, 0], psi[0], xr
    return times, rates, inst, norms, psi, xr


def propagate_with_absorber(psi0, sgrid: SpatialGrid, V, absorber: AbsorberConfig | None,
                            dt: float, n_steps: int, units: UnitSystem = NATURAL,
                            check: bool = True) -> PropagationResult:
    """Split-step propagation of one state (packet or grid samples) with a detector.

    Negative ``dt`` runs backward in time with the detector still absorbing in
    the direction of propagation (``H + i V_I`` instead of ``H - i V_I``).
    """
    if n_steps < 1 or dt == 0:
        raise ValueError("need n_steps >= 1 and dt != 0")
    psi = _as_array(psi0, sgrid, units)
    if psi.ndim != 1:
        raise ValueError("propagate_with_absorber takes a single state; use gram_operator for a basis")
    if check:
        check_policy(psi, sgrid, V, absorber, dt, units)
    times, rates, inst, norms, final, _ = _propagate(psi, sgrid, V, absorber, dt, n_steps, units, cross=False)
    return PropagationResult(times, rates, inst, norms, final, dt)


def arrival_distribution_raw(run: PropagationResult, tail_window: float = 0.1) -> TimeDistribution:
    """The detector's absorption rate as a non-normalized distribution on increasing times."""
    n = run.rate.size
    w = max(1, int(round(tail_window * n)))
    tail = float(run.norm[-w - 1] - run.norm[-1]) if run.norm.ndim == 1 else 0.0
    if tail > TAIL_WARN:
        warnings.warn(TruncationWarning(
            f"propagation stopped while still absorbing: {tail:.2e} absorbed in the last "
            f"{w} steps (> {TAIL_WARN:g}); total arrival is underestimated", tail))
    t, r = run.times, run.rate
    if run.dt < 0:
        t, r = t[::-1], r[::-1]
    return TimeDistribution(t, r)


def total_arrival(dist: TimeDistribution) -> float:
    return dist.total()


def conditional_distribution(dist: TimeDistribution, eps: float = EPS_N) -> TimeDistribution:
    """``Pi_c = Pi^A / N``; refuses when ``N <= eps``."""
    N = total_arrival(dist)
    if N <= eps:
        raise NoArrivalError(f"total arrival probability {N:.3e} <= {eps:g}; conditional distribution undefined")
    return dist.scaled(1.0 / N)


def conditional_mean(dist: TimeDistribution, eps: float = EPS_N) -> float:
    return conditional_distribution(dist, eps).moment(1)


# -- operator normalization ---------------------------------------------------

def lowdin_orthonormalize(states: np.ndarray, dx: float, eps: float = 1e-10):
    """Symmetric orthonormalization of the rows of ``states``; returns ``(orthonormal_rows, X)``
    with ``orthonormal = X^T states``."""
    S = np.conj(states) @ states.T * dx
    lam, U = np.linalg.eigh(S)
    if lam[0] <= eps * lam[-1]:
        raise NumericalPolicyError("basis packets are (nearly) linearly dependent")
    X = U @ np.diag(lam**-0.5) @ U.conj().T
    return X.T @ states, X


@dataclass(frozen=True)
class SpanReport:
    retained: int
    dropped_eigenvalues: tuple


def inverse_sqrt(N: np.ndarray, floor: float = EPS_N):
    """``N^{-1/2}`` on the eigenspaces above ``floor * lambda_max``; projector onto them; report."""
    lam, U = np.linalg.eigh(0.5 * (N + N.conj().T))
    keep = lam > floor * lam[-1]
    Uk = U[:, keep]
    inv = Uk @ np.diag(lam[keep] ** -0.5) @ Uk.conj().T
    proj = Uk @ Uk.conj().T
    return inv, proj, SpanReport(int(keep.sum()), tuple(lam[~keep].tolist()))


@dataclass(frozen=True)
class GramOperator:
    """Total-arrival operator compressed to the span of an orthonormalized packet basis.

    ``basis`` holds the orthonormal states on the spatial grid (rows);
    ``cross_rates[n]`` is the matrix ``Pi_{mn}`` at ``times[n]``.
    """

    basis: np.ndarray
    matrix: np.ndarray
    times: np.ndarray
    cross_rates: np.ndarray
    dt: float
    floor: float = EPS_N
    lowdin: np.ndarray | None = None

    def __post_init__(self):
        N = self.matrix
        if np.max(np.abs(N - N.conj().T)) > 1e-10:
            raise NumericalPolicyError("Gram matrix is not Hermitian")
        lam = np.linalg.eigvalsh(N)
        if lam[0] < -1e-6:
            raise NumericalPolicyError(f"Gram matrix has eigenvalue {lam[0]:.3e} < -1e-6; propagation is inaccurate")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def combine(self, coeffs) -> np.ndarray:
        """The state ``sum_m c_m e_m`` on the spatial grid."""
        return np.asarray(coeffs, dtype=complex) @ self.basis

    def coefficients(self, psi: np.ndarray, dx: float) -> np.ndarray:
        return np.conj(self.basis) @ psi * dx


def gram_operator(basis, sgrid: SpatialGrid, V, absorber: AbsorberConfig, dt: float, n_steps: int,
                  units: UnitSystem = NATURAL, floor: float = EPS_N, check: bool = True) -> GramOperator:
    """``N_{mn} = int dt Pi_{mn}(t)`` with ``Pi_{mn}`` the cross absorption rate of basis states.

    The basis is first Lowdin-orthonormalized on the spatial grid so that the
    matrix represents the operator on the span (eigenvalues in ``[0, 1]``).
    """
    states = _as_array(list(basis), sgrid, units)
    if states.ndim == 1:
        states = states[None, :]
    ortho, X = lowdin_orthonormalize(states, sgrid.dx)
    if check:
        for s in ortho:
            check_policy(s, sgrid, V, absorber, dt, units)
    times, _, _, _, _, xr = _propagate(ortho, sgrid, V, absorber, dt, n_steps, units, cross=True)
    N = np.sum(xr, axis=0) * abs(dt)
    N = 0.5 * (N + N.conj().T)
    if dt < 0:
        times, xr = times[::-1], xr[::-1]
    return GramOperator(ortho, N, times, xr, dt, floor, X)


def operator_normalized_kernel(G: GramOperator):
    """``Pi_N(t) = N^{-1/2} Pi(t) N^{-1/2}`` for every time, with the span report."""
    inv, proj, report = inverse_sqrt(G.matrix, G.floor)
    if report.dropped_eigenvalues:
        warnings.warn(f"operator normalization: {len(report.dropped_eigenvalues)} direction(s) below the "
                      f"eigenvalue floor were projected out")
    PiN = inv @ G.cross_rates @ inv
    return PiN, proj, report


def operator_normalized_distribution(G: GramOperator, coeffs) -> TimeDistribution:
    """``<psi_N|Pi_N(t)|psi_N>`` with ``psi_N = N^{1/2} psi / ||N^{1/2} psi||``.

    ``coeffs`` are the components of ``psi`` in the orthonormal basis ``G.basis``.
    """
    c = np.asarray(coeffs, dtype=complex)
    PiN, proj, _ = operator_normalized_kernel(G)
    lam, U = np.linalg.eigh(G.matrix)
    sqrtN = U @ np.diag(np.sqrt(np.clip(lam, 0, None))) @ U.conj().T
    v = sqrtN @ (proj @ c)
    nv = np.linalg.norm(v)
    if nv**2 <= G.floor * max(lam[-1], 0):
        raise NoArrivalError("state has no component on the retained span")
    psiN = v / nv
    vals = np.einsum("m,tmn,n->t", np.conj(psiN), PiN, psiN).real
    return TimeDistribution(G.times, vals)


def raw_distribution_from_gram(G: GramOperator, coeffs) -> TimeDistribution:
    """``<psi|Pi(t)|psi>`` assembled from the stored cross rates (bilinear in ``psi``)."""
    c = np.asarray(coeffs, dtype=complex)
    return TimeDistribution(G.times, np.einsum("m,tmn,n->t", np.conj(c), G.cross_rates, c).real)


def gram_to_csv(G: GramOperator, path):
    from .state import write_csv
    rows = [(m, n, G.matrix[m, n].real, G.matrix[m, n].imag) for m in range(G.size) for n in range(G.size)]
    write_csv(path, ["m", "n", "re", "im"], np.array(rows, dtype=float))
