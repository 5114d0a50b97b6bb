"""How clock-phase sign flips slow the convergence of the scattering clock distribution.

Where ``1 + T +- R`` passes through zero the channel phase jumps by pi, so the
energy amplitude has a step and the time distribution decays only like
``1/t^2``. This prints the normalization over growing windows for a barrier
with flips inside the packet and for a delta potential (no flips).

    python scripts/scatter_tails.py
"""

import warnings

import numpy as np

from tempus import kernelcore as kc
from tempus.scatter1d import (SignFlipWarning, clock_kernel_scattering, delta_potential_amplitudes, sign_flips,
                              square_well_amplitudes)
from tempus.state import MomentumGrid, gaussian_packet, time_grid, to_energy_channels


def main():
    grid = MomentumGrid.symmetric(10.0, 4000)
    p = gaussian_packet(grid, 4.0, 0.5, -15.0)
    phi = to_energy_channels(p)
    cases = {"square V0=8, a=1": square_well_amplitudes(8.0, 1.0, grid),
             "delta g=1": delta_potential_amplitudes(1.0, grid)}
    for name, amps in cases.items():
        flips = [(s, round(a, 3), round(b, 3)) for s, a, b in sign_flips(amps) if 2.0 < a < 6.0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SignFlipWarning)
            b = clock_kernel_scattering(amps, grid)
        print(f"{name}: flips inside the packet {flips or 'none'}")
        for half in (10, 25, 50, 100):
            t = time_grid(5 - half, 5 + half, 40 * half + 1)
            d = kc.time_distribution(b, phi, t, "clock")
            print(f"  window +-{half:<4} integral {d.total():.6f}  deficit {1 - d.total():.2e}")


if __name__ == "__main__":
    main()
