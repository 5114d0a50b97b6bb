import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tempus.state import (EnergyChannels, GaussianComponent, MomentumGrid, TimeDistribution, UnitSystem, WavePacket,
                          energy_grid, free_evolve, from_energy_channels, gaussian_packet, mean_position,
                          position_amplitude, read_csv, superposition, time_grid, to_energy_channels, translate,
                          write_csv)

GRID = MomentumGrid.symmetric(10.0, 4000)


def _synth(packet, x, t=0.0, hbar=1.0, m=1.0):
    # plain Fourier sum, independent of position_amplitude
    k, w, a = packet.k, packet.grid.weights, packet.amplitudes
    ph = np.exp(1j * np.outer(x, k) - 1j * hbar * k**2 * t / (2 * m))
    return ph @ (w * a) / np.sqrt(2 * np.pi)


def test_grid_rejects_zero_node():
    with pytest.raises(ValueError):
        MomentumGrid.uniform(-1, 1, 5)


def test_grid_rejects_nonincreasing():
    with pytest.raises(ValueError):
        MomentumGrid(np.array([1.0, 1.0, 2.0]), np.ones(3))


def test_symmetric_grid_flags():
    assert GRID.is_symmetric and not GRID.is_positive
    pos = MomentumGrid.uniform(0, 5, 100)
    assert pos.is_positive and not pos.is_symmetric


def test_gaussian_is_normalized():
    p = gaussian_packet(GRID, 5, 0.5, -20)
    assert abs(p.norm() - 1) < 1e-12


def test_coverage_error():
    with pytest.raises(ValueError, match="cover"):
        gaussian_packet(MomentumGrid.symmetric(6.0, 400), 5, 0.5)


def test_mean_position_at_start():
    p = gaussian_packet(GRID, 5, 0.5, -20)
    x = np.linspace(-40, 0, 8001)
    dens = np.abs(_synth(p, x)) ** 2
    ref = np.trapezoid(x * dens, x) / np.trapezoid(dens, x)
    assert abs(ref + 20) < 1e-3
    assert abs(mean_position(p) - ref) < 1e-3


def test_mean_position_drifts_classically():
    p = gaussian_packet(GRID, 5, 0.5, -20)
    assert abs(mean_position(p, 4.0)) < 1e-2


def test_peak_density_matches_gaussian_transform():
    sk = 0.5
    p = gaussian_packet(GRID, 5, sk, -20)
    sx = 1 / (2 * sk)
    dens = abs(position_amplitude(p, np.array([-20.0]))[0]) ** 2
    assert abs(dens - 1 / np.sqrt(2 * np.pi * sx**2)) < 1e-4


def test_position_amplitude_matches_plain_sum():
    p = gaussian_packet(GRID, 3, 0.7, -5)
    x = np.linspace(-12, 4, 33)
    assert np.max(np.abs(position_amplitude(p, x, 0.7) - _synth(p, x, 0.7))) < 1e-12


def test_energy_channel_jacobian_single_node():
    p = superposition(GRID, [GaussianComponent(2, 0.6, 1.0), GaussianComponent(-3, 0.4, -2.0, 0.5j)])
    phi = to_energy_channels(p)
    j = 1234
    k = phi.k_values[j]
    wk = GRID.weights[GRID.k_values > 0][j]
    pk = p.amplitudes[GRID.k_values > 0][j]
    pmk = p.amplitudes[GRID.k_values < 0][::-1][j]
    lhs = np.sum(np.abs(phi.amplitudes[j]) ** 2) * phi.weights[j]
    # |psi_+|^2 + |psi_-|^2 = (m/hbar^2 k)(|psi(k)|^2 + |psi(-k)|^2), w_E = (hbar^2 k/m) w_k
    assert abs(lhs - (abs(pk) ** 2 + abs(pmk) ** 2) * wk) < 1e-12


def test_energy_channels_round_trip():
    u = UnitSystem(0.7, 1.9)
    p = superposition(GRID, [GaussianComponent(2, 0.6, 1.0), GaussianComponent(-3, 0.4, -2.0, 0.5j)])
    back = from_energy_channels(to_energy_channels(p, u), GRID, u)
    assert np.max(np.abs(back.amplitudes - p.amplitudes)) < 1e-12


def test_positive_grid_channels():
    g = MomentumGrid.uniform(0, 8, 800)
    p = gaussian_packet(g, 4, 0.5)
    phi = to_energy_channels(p)
    assert np.allclose(np.abs(phi.amplitudes[:, 0]), np.abs(phi.amplitudes[:, 1]))
    assert abs(phi.norm() - 1) < 1e-12


def test_energy_grid_weights():
    k, E, wE = energy_grid(GRID, UnitSystem(2.0, 3.0))
    assert np.allclose(E, 4.0 * k**2 / 6.0)
    assert np.allclose(wE, 4.0 * k / 3.0 * GRID.spacing)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        time_grid(1, 0, 10)
    with pytest.raises(ValueError):
        TimeDistribution(np.array([0, 1, 3.0]), np.zeros(3))


def test_time_distribution_moments_of_gaussian():
    t = time_grid(-10, 10, 4001)
    v = np.exp(-((t - 1.5) ** 2) / (2 * 0.8**2)) / np.sqrt(2 * np.pi * 0.8**2)
    d = TimeDistribution(t, v)
    assert abs(d.total() - 1) < 1e-10
    assert abs(d.mean() - 1.5) < 1e-10
    assert abs(d.variance() - 0.64) < 1e-8
    assert abs(d.peak_time() - 1.5) < 1e-4
    assert abs(d.cumulative_values()[-1] - d.total()) < 1e-12


def test_csv_round_trip_and_determinism(tmp_path):
    data = np.array([[0.1, 1 / 3], [0.2, 2 / 3]])
    write_csv(tmp_path / "a.csv", ["t", "pi"], data, {"note": "x"})
    write_csv(tmp_path / "b.csv", ["t", "pi"], data, {"note": "x"})
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    cols, back = read_csv(tmp_path / "a.csv")
    assert cols == ["t", "pi"]
    assert np.array_equal(back, data)


small = st.floats(-3, 3)


@settings(max_examples=30, deadline=None)
@given(k0=st.floats(-4, 4), sk=st.floats(0.3, 1.0), x0=st.floats(-10, 10), t=small)
def test_free_evolution_preserves_norm(k0, sk, x0, t):
    p = gaussian_packet(GRID, k0, sk, x0)
    assert abs(free_evolve(p, t).norm() - 1) < 1e-12
    assert abs(translate(p, t).norm() - 1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(k0=st.floats(-4, 4), sk=st.floats(0.3, 1.0), x0=st.floats(-10, 10))
def test_energy_channels_preserve_norm(k0, sk, x0):
    p = gaussian_packet(GRID, k0, sk, x0)
    assert abs(to_energy_channels(p).norm() - p.norm()) < 1e-12


@settings(max_examples=20, deadline=None)
@given(k0=st.floats(-4, 4), x0=st.floats(-10, 10), a=small)
def test_translation_shifts_mean_position(k0, x0, a):
    p = gaussian_packet(GRID, k0, 0.6, x0)
    # 4th-order differences in k: error grows like (x dk)^4
    assert abs(mean_position(translate(p, a)) - mean_position(p) - a) < 1e-5


def test_reflection_and_time_reversal():
    p = gaussian_packet(GRID, 2, 0.5, -3)
    assert abs(p.reflected().mean_momentum() + p.mean_momentum()) < 1e-12
    assert abs(mean_position(p.reflected()) + mean_position(p)) < 1e-6
    tr = p.time_reversed()
    assert abs(tr.mean_momentum() + p.mean_momentum()) < 1e-12
    assert abs(mean_position(tr) - mean_position(p)) < 1e-6


def test_energy_channels_shape_check():
    with pytest.raises(ValueError):
        EnergyChannels(np.arange(3.0), np.ones(3), ("+", "-"), np.zeros((3, 1)))


def test_packet_arithmetic():
    p = gaussian_packet(GRID, 1, 0.5)
    q = p + 2 * p
    assert isinstance(q, WavePacket) and abs(q.norm() - 9) < 1e-10
