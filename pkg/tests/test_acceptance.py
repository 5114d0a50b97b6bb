"""Acceptance suite: one marked test group per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints a
PASS/FAIL line per criterion.
"""

from pathlib import Path

import numpy as np
import pytest

import oracles
from tempus import kernelcore as kc
from tempus.conditional import (AbsorberConfig, SpatialGrid, arrival_distribution_raw, conditional_distribution,
                                gram_operator, operator_normalized_distribution, operator_normalized_kernel,
                                propagate_with_absorber, synthesize)
from tempus.config import RunConfig, parse_packet
from tempus.freearrival import (PlanePacket3D, current_at_plane, free_arrival_basis, kijowski_1d, kijowski_plane_3d,
                                penalty_term, twisted_basis)
from tempus.kernelcore import KernelBasis
from tempus.partialwave3d import (PhaseShiftTable, channel_factor, clock_distribution_3d, induced_basis,
                                  partial_wave_packet, spherical_well_phase_shifts)
from tempus.scatter1d import (clock_kernel_scattering, delta_potential_amplitudes, free_amplitudes, sign_flips,
                              square_well_amplitudes)
from tempus.state import (GaussianComponent, MomentumGrid, free_evolve, gaussian_packet, superposition, time_grid,
                          to_energy_channels)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GRID = MomentumGrid.symmetric(10.0, 4000)
PGRID = MomentumGrid.uniform(0.0, 10.0, 2000)
SEED = 20240611


def _random_packet(rng, grid=GRID, allow_left=True):
    """A Gaussian or a two-Gaussian superposition with momenta away from k = 0."""
    comps = []
    for _ in range(rng.integers(1, 3)):
        k0 = rng.uniform(2.5, 6.0) * (rng.choice([-1, 1]) if allow_left else 1)
        sk = rng.uniform(0.3, 0.5)
        x0 = rng.uniform(-15, -3) if k0 > 0 else rng.uniform(3, 15)
        comps.append(GaussianComponent(k0, sk, x0, rng.uniform(0.3, 1) * np.exp(2j * np.pi * rng.uniform())))
    return superposition(grid, comps, positive_only=grid.is_positive)


def _window(b, phi, sense, n=3001):
    return kc.auto_window(b, phi, sense, n_sigma=10.0, n=n)


def _transverse(rng, n=7):
    q = np.linspace(-1.5, 1.5, n)
    k2, k3 = np.meshgrid(q, q, indexing="ij")
    w = np.full(k2.size, (q[1] - q[0]) ** 2)
    chi = rng.normal(size=k2.size) + 1j * rng.normal(size=k2.size)
    chi /= np.sqrt(np.sum(w * np.abs(chi) ** 2))
    return np.column_stack([k2.ravel(), k3.ravel()]), w, chi


def _support(packet, frac=1e-8):
    a = np.abs(packet.amplitudes) ** 2
    k = np.abs(packet.k[a > frac * a.max()])
    return k.min(), k.max()


def _random_scatterer(rng, packet):
    """Delta or square potential whose clock phases do not flip on the packet's support.

    Where ``cos delta`` changes sign the channel phase jumps by pi and the
    distribution acquires slowly decaying tails; such cases are outside the
    regime this criterion certifies.
    """
    lo, hi = _support(packet)
    while True:
        if rng.uniform() < 0.5:
            amps = delta_potential_amplitudes(rng.uniform(-2, 2), GRID)
        else:
            amps = square_well_amplitudes(rng.uniform(-2, 1.5), rng.uniform(0.3, 1.0), GRID)
        if not any(a < hi and b > lo for _, a, b in sign_flips(amps)):
            return amps


def _random_partial_wave(rng):
    chans = {}
    for _ in range(rng.integers(1, 4)):
        l = int(rng.integers(0, 4))
        m = int(rng.integers(-l, l + 1))
        chans[(l, m)] = (rng.uniform(3, 6), rng.uniform(0.3, 0.5), rng.uniform(5, 20),
                         rng.uniform(0.3, 1) * np.exp(2j * np.pi * rng.uniform()))
    state = partial_wave_packet(PGRID, chans)
    lo = min(v[0] - 6 * v[1] for v in chans.values())
    while True:
        tab = spherical_well_phase_shifts(rng.uniform(-3, 2), rng.uniform(0.5, 1.2), 3, PGRID)
        sel = PGRID.k_values >= lo
        ok = all(np.all(np.abs(np.cos(tab.delta[l][sel])) > 1e-3) and
                 np.all(np.diff(np.sign(np.cos(tab.delta[l][sel]))) == 0) for l, _ in state.channels)
        if ok:
            return state, tab


# -- 1 -------------------------------------------------------------------------------

@pytest.mark.criterion(1)
# scatterers are drawn so that any clock-phase flip lies outside the packet support
@pytest.mark.filterwarnings("ignore::tempus.scatter1d.SignFlipWarning")
@pytest.mark.parametrize("family", ["free-constant", "kijowski-1d", "plane-3d", "scattering", "partial-wave"])
def test_normalization(family):
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for _ in range(20):
        if family == "partial-wave":
            state, tab = _random_partial_wave(rng)
            phi = state.to_energy_channels()
            t = _window(induced_basis(state, tab), phi, "clock")
            d = clock_distribution_3d(state, tab, t)
        else:
            p = _random_packet(rng)
            phi = to_energy_channels(p)
            if family == "free-constant":
                b = KernelBasis.constant(phi)
                d = kc.time_distribution(b, phi, _window(b, phi, "clock"), "clock")
            elif family == "kijowski-1d":
                d = kijowski_1d(p, _window(free_arrival_basis(p), phi, "arrival"))
            elif family == "plane-3d":
                tk, tw, chi = _transverse(rng)
                d = kijowski_plane_3d(PlanePacket3D.from_factors(p, chi, tk, tw),
                                      _window(free_arrival_basis(p), phi, "arrival"))
            else:
                b = clock_kernel_scattering(_random_scatterer(rng, p), GRID)
                d = kc.time_distribution(b, phi, _window(b, phi, "clock"), "clock")
        worst = max(worst, abs(d.total() - 1))
    assert worst < 1e-4, f"{family}: max |integral - 1| = {worst:.2e}"


# -- 2 -------------------------------------------------------------------------------

@pytest.mark.criterion(2)
# scatterers are drawn so that any clock-phase flip lies outside the packet support
@pytest.mark.filterwarnings("ignore::tempus.scatter1d.SignFlipWarning")
@pytest.mark.parametrize("family", ["free-constant", "kijowski-1d", "plane-3d", "scattering", "partial-wave"])
def test_covariance(family):
    rng = np.random.default_rng(SEED + 2)
    t = time_grid(-10, 10, 401)
    worst = 0.0
    for _ in range(10):
        t0 = rng.uniform(-3, 3)
        if family == "partial-wave":
            state, tab = _random_partial_wave(rng)
            a = clock_distribution_3d(state.evolve(t0), tab, t).values
            b = clock_distribution_3d(state, tab, t - t0).values
        else:
            p = _random_packet(rng)
            q = free_evolve(p, t0)
            if family == "free-constant":
                phi = to_energy_channels(p)
                kb = KernelBasis.constant(phi)
                a = kc.time_distribution(kb, to_energy_channels(q), t, "clock").values
                b = kc.time_distribution(kb, phi, t - t0, "clock").values
            elif family == "kijowski-1d":
                a = kijowski_1d(q, t).values
                b = kijowski_1d(p, t + t0).values
            elif family == "plane-3d":
                tk, tw, chi = _transverse(rng)
                a = kijowski_plane_3d(PlanePacket3D.from_factors(q, chi, tk, tw), t).values
                b = kijowski_plane_3d(PlanePacket3D.from_factors(p, chi, tk, tw), t + t0).values
            else:
                kb = clock_kernel_scattering(_random_scatterer(rng, p), GRID)
                a = kc.time_distribution(kb, to_energy_channels(q), t, "clock").values
                b = kc.time_distribution(kb, to_energy_channels(p), t - t0, "clock").values
        worst = max(worst, float(np.max(np.abs(a - b))))
    assert worst < 1e-8, f"{family}: sup-norm {worst:.2e}"


# -- 3 -------------------------------------------------------------------------------

@pytest.mark.criterion(3)
def test_backflow_fixture():
    cfg = RunConfig.load(CONFIGS / "backflow.cfg")
    p = parse_packet(cfg)
    t = time_grid(cfg.get("times", "tmin"), cfg.get("times", "tmax"), cfg.get("times", "n", int))
    j = current_at_plane(p, t)
    pi = kijowski_1d(p, t).values
    assert j.min() <= -1e-3
    assert pi.min() >= -1e-12


@pytest.mark.criterion(3)
def test_kijowski_positive_on_random_states():
    rng = np.random.default_rng(SEED + 3)
    t = time_grid(-20, 20, 801)
    for _ in range(20):
        assert kijowski_1d(_random_packet(rng), t).values.min() >= -1e-12


# -- 4 -------------------------------------------------------------------------------

@pytest.mark.criterion(4)
@pytest.mark.parametrize("k0,sk,x0,frozen", [(5.0, 0.5, -20.0, oracles.CLASSICAL_MEAN_ARRIVAL),
                                             (8.0, 0.25, -40.0, None)])
def test_classical_limit(k0, sk, x0, frozen):
    ref = frozen if frozen is not None else oracles.classical_mean_arrival(k0, sk, x0)
    p = gaussian_packet(GRID, k0, sk, x0)
    t = _window(free_arrival_basis(p), to_energy_channels(p), "arrival", n=6001)
    mean = kijowski_1d(p, t).mean()
    assert abs(mean - ref) / ref < 0.01


# -- 5 -------------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_unitarity_and_eigenphases():
    rng = np.random.default_rng(SEED + 5)
    for _ in range(100):
        k = rng.uniform(0.05, 10, size=1)
        for amps in (delta_potential_amplitudes(rng.uniform(-20, 20), k),
                     square_well_amplitudes(rng.uniform(-20, 20), rng.uniform(0.1, 3), k)):
            assert amps.unitarity_defect() < 1e-10
            assert amps.parity_defect() < 1e-10


@pytest.mark.criterion(5)
def test_amplitudes_match_oracles():
    rng = np.random.default_rng(SEED + 55)
    for _ in range(8):
        V0, a, k = rng.uniform(-5, 5), rng.uniform(0.3, 1.5), rng.uniform(0.3, 4)
        amps = square_well_amplitudes(V0, a, [k])
        T, R = oracles.shoot_1d(lambda x: V0 if abs(x) <= a else 0.0, k, -a - 0.5, a + 0.5)
        assert abs(amps.T[0] - T) < 1e-6 and abs(amps.R[0] - R) < 1e-6
        g = rng.uniform(-5, 5)
        amps = delta_potential_amplitudes(g, [k])
        T, R = oracles.delta_transfer(g, k)
        assert abs(amps.T[0] - T) < 1e-6 and abs(amps.R[0] - R) < 1e-6


# -- 6 -------------------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_free_limit_scatter1d():
    b = clock_kernel_scattering(free_amplitudes(GRID), GRID)
    K = kc.momentum_kernel(b, GRID.k_values)
    idx = np.arange(0, GRID.n, 13)
    k = GRID.k_values[idx]
    assert np.max(np.abs(K[np.ix_(idx, idx)] - oracles.free_kernel_325a(k, k))) < 1e-12


@pytest.mark.criterion(6)
def test_free_limit_partialwave():
    rng = np.random.default_rng(SEED + 6)
    state, _ = _random_partial_wave(rng)
    t = time_grid(-10, 30, 801)
    d = clock_distribution_3d(state, PhaseShiftTable.zero(PGRID.k_values, 3), t).values
    k, w = PGRID.k_values, PGRID.weights
    A = np.exp(1j * np.outer(t, k**2) / 2) @ (w * np.sqrt(k) * state.amplitudes).T
    ref = np.sum(np.abs(A) ** 2, axis=1) / (2 * np.pi)
    assert np.max(np.abs(d - ref)) < 1e-10
    assert channel_factor(0.0) == 1


# -- 7 -------------------------------------------------------------------------------

TWISTS = [
    lambda k: 0.5 * k,
    lambda k: 0.05 * k**2,
    lambda k: 0.8 * np.sin(0.7 * k),
    lambda k: 0.6 * np.tanh(k - 5),
    lambda k: 0.3 * np.cos(1.3 * k),
    lambda k: 0.4 * np.exp(-((k - 5) ** 2)),
    lambda k: 0.02 * k**3 / 10,
    lambda k: 0.7 * np.log(k + 1),
    lambda k: 0.25 * k + 0.2 * np.sin(2 * k),
    lambda k: 0.5 * np.arctan(2 * (k - 4.5)),
]


@pytest.mark.criterion(7)
@pytest.mark.parametrize("i", range(len(TWISTS)))
def test_minimal_variance(i):
    twist = TWISTS[i]
    p = gaussian_packet(GRID, 5, 0.5, -20)
    phi = to_energy_channels(p)
    b0 = free_arrival_basis(p)
    t = time_grid(-20, 40, 8001)
    v_min = kc.time_distribution(b0, phi, t, "arrival").variance()
    excess = []
    for s in (1.0, 2.0):
        bt = twisted_basis(GRID, lambda k: s * twist(k))
        v_tw = kc.time_distribution(bt, phi, t, "arrival").variance()
        excess.append(v_tw - v_min)
    assert excess[0] > 0
    assert abs(excess[0] - penalty_term(p, twist)) / excess[0] < 0.01
    assert abs(excess[1] / excess[0] - 4) / 4 < 0.05


# -- 8 -------------------------------------------------------------------------------

@pytest.mark.criterion(8)
@pytest.mark.parametrize("rank", [1, 3, 8])
def test_schmidt_round_trip(rank):
    rng = np.random.default_rng(SEED + 8 + rank)
    g = MomentumGrid.symmetric(4.0, 128)
    phi = to_energy_channels(gaussian_packet(g, 2, 0.3, -3))
    f = rng.normal(size=(rank, 64, 2)) + 1j * rng.normal(size=(rank, 64, 2))
    b0 = KernelBasis(phi.E_values, phi.weights, phi.channels, f)
    K = kc.kernel_matrix(b0)
    # oracle: plain outer-product sum
    B = f.reshape(rank, -1)
    assert np.max(np.abs(K.matrix - B.T @ B.conj() / (2 * np.pi))) < 1e-12 * np.max(np.abs(K.matrix))
    bs = kc.schmidt_basis(K)
    assert bs.size == rank
    rec = kc.kernel_matrix(bs).matrix
    assert np.max(np.abs(rec - K.matrix)) < 1e-10 * np.max(np.abs(K.matrix))
    t = time_grid(-5, 10, 151)
    d0 = kc.time_distribution(b0, phi, t, validate=False).values
    ds = kc.time_distribution(bs, phi, t, validate=False).values
    assert np.max(np.abs(d0 - ds)) < 1e-10 * np.max(np.abs(d0))


# -- 9 -------------------------------------------------------------------------------

@pytest.mark.criterion(9)
@pytest.mark.parametrize("sense", ["clock", "arrival"])
def test_moments_vs_quadrature(sense):
    rng = np.random.default_rng(SEED + 9)
    for _ in range(10):
        p = _random_packet(rng)
        phi = to_energy_channels(p)
        b = KernelBasis.constant(phi)
        t = _window(b, phi, sense, n=4001)
        d = kc.time_distribution(b, phi, t, sense)
        m1 = kc.mean_time(b, phi, sense)
        m2 = kc.second_moment(b, phi)
        q1, q2 = d.moment(1), d.moment(2)
        assert abs(m1 - q1) <= 0.01 * max(abs(q1), np.sqrt(q2))
        assert abs(m2 - q2) / q2 < 0.01


# -- 10 ------------------------------------------------------------------------------

SG = SpatialGrid.centered(128, 2048)
AB = AbsorberConfig(0.0, 2.0, 10.0, 4)
DT, STEPS = 0.002, 6000


@pytest.fixture(scope="module")
def cap_run():
    p = gaussian_packet(GRID, 5, 0.5, -20)
    return p, propagate_with_absorber(p, SG, None, AB, DT, STEPS)


@pytest.mark.criterion(10)
def test_conditional_bookkeeping(cap_run):
    _, r = cap_run
    assert abs(r.absorbed + r.norm[-1] - r.norm[0]) < 1e-4
    c = conditional_distribution(arrival_distribution_raw(r))
    assert abs(c.total() - 1) < 1e-6


@pytest.mark.criterion(10)
def test_operator_normalization():
    basis = [gaussian_packet(GRID, k0, 0.5, x0) for k0, x0 in [(5, -20), (5, -14), (4, -26), (6, -30)]]
    G = gram_operator(basis, SG, None, AB, DT, STEPS)
    PiN, proj, rep = operator_normalized_kernel(G)
    assert rep.retained == 4
    assert np.max(np.abs(PiN.sum(axis=0) * DT - np.eye(4))) < 1e-4
    rng = np.random.default_rng(SEED + 10)
    for _ in range(2):
        c = rng.normal(size=4) + 1j * rng.normal(size=4)
        dN = operator_normalized_distribution(G, c)
        r = propagate_with_absorber(G.combine(c), SG, None, AB, DT, STEPS)
        dc = conditional_distribution(arrival_distribution_raw(r))
        assert np.max(np.abs(dN.values - dc.values)) / dc.values.max() < 1e-6


# -- 11 ------------------------------------------------------------------------------

@pytest.mark.criterion(11)
def test_reflection_invariance(cap_run):
    p, r = cap_run
    rr = propagate_with_absorber(SG.reflect(synthesize(p, SG)), SG, None, AB, DT, STEPS)
    assert np.max(np.abs(rr.rate - r.rate)) < 1e-8


@pytest.mark.criterion(11)
def test_time_reversal_mirror(cap_run):
    p, r = cap_run
    back = propagate_with_absorber(np.conj(synthesize(p, SG)), SG, None, AB, -DT, STEPS)
    fwd, rev = arrival_distribution_raw(r), arrival_distribution_raw(back)
    assert np.allclose(rev.t_values[::-1], -fwd.t_values)
    assert np.max(np.abs(rev.values[::-1] - fwd.values)) < 1e-4


@pytest.mark.criterion(11)
def test_kijowski_reflection_invariance():
    rng = np.random.default_rng(SEED + 11)
    t = time_grid(-10, 10, 201)
    for _ in range(5):
        p = _random_packet(rng)
        assert np.max(np.abs(kijowski_1d(p.reflected(), t).values - kijowski_1d(p, t).values)) < 1e-12
