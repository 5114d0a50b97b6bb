"""The frozen oracle numbers must still follow from the oracle code."""

import numpy as np

import oracles


def test_frozen_classical_mean():
    assert abs(oracles.classical_mean_arrival(5, 0.5, -20) - oracles.CLASSICAL_MEAN_ARRIVAL) < 2e-6


def test_frozen_classical_peak():
    assert abs(oracles.classical_flux_peak(5, 0.5, -20) - oracles.CLASSICAL_FLUX_PEAK) < 2e-5


def test_classical_flux_is_a_density():
    from scipy.integrate import quad
    tot = quad(lambda t: oracles.classical_flux(t, 5, 0.5, -20), 0, 20, limit=200)[0]
    assert abs(tot - 1) < 1e-6


def test_shooting_free_is_trivial():
    T, R = oracles.shoot_1d(lambda x: 0.0, 1.3, -1, 1)
    assert abs(T - 1) < 1e-10 and abs(R) < 1e-10


def test_delta_transfer_half_transmission():
    T, R = oracles.delta_transfer(1.0, 1.0)
    assert abs(abs(T) ** 2 - 0.5) < 1e-14
    assert abs(abs(T) ** 2 + abs(R) ** 2 - 1) < 1e-14


def test_radial_shooting_free_is_zero():
    for l in range(3):
        assert oracles.mod_pi_distance(oracles.radial_phase_shift(lambda r: 0.0, l, 1.7, 3.0), 0) < 1e-8
