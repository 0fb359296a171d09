"""Shared fixtures: small fast domains and a warmed-up solver kernel."""

import numpy as np
import pytest

from floodda.domain import CaseSpec, DomainCase, RasterGrid, build_synthetic_reach
from floodda import solver


def tiny_spec(**kw):
    """A 60x16 reach that runs in well under a second per simulated hour."""
    base = dict(nx=60, ny=16, dx=25.0, slope=1e-3, channel_width=75.0,
                channel_depth=2.0, sinuosity_amplitude=60.0,
                sinuosity_wavelength=500.0, cross_slope=4e-3, z_datum=10.0,
                n_zones=3, n_subdomains=2)
    base.update(kw)
    return CaseSpec(**base)


@pytest.fixture(scope="session")
def tiny_case():
    return build_synthetic_reach(tiny_spec())


@pytest.fixture(scope="session")
def straight_case():
    """Straight prismatic channel, wide enough for the normal-depth check."""
    return build_synthetic_reach(tiny_spec(
        nx=80, ny=26, sinuosity_amplitude=0.0, channel_width=500.0,
        cross_slope=2e-3, slope=5e-4, channel_depth=3.0))


def handmade_case(nx=8, ny=4, dx=10.0, slope=0.01):
    """Minimal flat-valley case built by hand (no meander machinery)."""
    grid = RasterGrid(nx, ny, dx)
    x = np.arange(nx) * dx
    zb = np.tile(5.0 - slope * x, (ny, 1))
    fz = np.zeros((ny, nx), dtype=np.int32)
    sub = np.ones((ny, nx), dtype=np.int32)
    sub[1:3, :] = 0
    cl = np.column_stack([np.linspace(-dx / 2, nx * dx - dx / 2, 4 * nx + 1),
                          np.full(4 * nx + 1, (ny - 1) * dx / 2)])
    return DomainCase(grid, zb, fz, sub, cl)


@pytest.fixture(scope="session", autouse=True)
def warm_kernel():
    """Trigger the jit compile once so timed tests measure physics only."""
    case = handmade_case()
    h = np.full((4, 8), 0.5)
    st = solver.HydroState(0.0, h, np.zeros_like(h), np.zeros_like(h))
    solver.step(st, case, [30.0])
