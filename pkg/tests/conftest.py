import numpy as np
import pytest

import zenoflux as zf


@pytest.fixture(scope="session")
def standard_scene():
    """Grid (-60, 30, 4096), m=1, Gaussian (x0=-20, sigma=2, k0=2),
    no-click region left of x=0."""
    grid = zf.make_grid(-60, 30, 4096)
    psi = zf.gaussian_packet(grid, -20.0, 2.0, 2.0)
    H = zf.build_hamiltonian(grid, 1.0)
    region = zf.half_line_region(grid, 0.0, "left")
    return {"grid": grid, "psi": psi, "H": H, "region": region,
            "projector": zf.spatial_projector(region)}


@pytest.fixture(scope="session")
def clipped_gaussian_scene():
    """Standard packet shifted so its half-maximum sits at x=0, then
    collapsed onto the left region and renormalized."""
    grid = zf.make_grid(-60, 30, 4096)
    x0 = -2.0 * np.sqrt(2.0 * np.log(2.0))
    inner = zf.gaussian_packet(grid, x0, 2.0, 2.0)
    region = zf.half_line_region(grid, 0.0, "left")
    psi0 = zf.truncated_state(grid, region, inner)
    return {"grid": grid, "psi0": psi0, "region": region,
            "H": zf.build_hamiltonian(grid, 1.0)}


def norm_distance(a: zf.WaveFunction, b: zf.WaveFunction) -> float:
    return float(np.sqrt(np.sum(np.abs(a.amplitudes - b.amplitudes) ** 2)
                         * a.grid.dx))
