"""Shared fixtures: small grids and reproducible random fields.

Random fields are band-limited white noise, built here independently of any
library helper so the tests do not certify the code with its own tools.
"""
import numpy as np
import pytest
from hypothesis import settings

import mnslab.fields as F
from mnslab.helmholtz import leray_project

settings.register_profile("suite", deadline=None, max_examples=12)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def grid8():
    return F.TorusGrid(8)


@pytest.fixture(scope="session")
def grid16():
    return F.TorusGrid(16)


@pytest.fixture(scope="session")
def grid32():
    return F.TorusGrid(32)


def band_limited(grid, seed, kmax=4.0, amplitude=1.0):
    """Random vector field with modes confined to |k| <= kmax, sup-normalized."""
    rng = np.random.default_rng(seed)
    raw = F.VectorField(grid, rng.standard_normal((3,) + grid.real_shape))
    spec = F.to_spectral(raw) * (grid.k_squared <= kmax * kmax)
    u = F.vector_from_spectral(grid, spec)
    sup = F.norm(u, "Linf")
    return F.VectorField(grid, u.data * (amplitude / sup))


def div_free(grid, seed, kmax=4.0, amplitude=1.0):
    """Divergence-free random field: projected noise, sup-normalized after."""
    u = leray_project(band_limited(grid, seed, kmax))
    sup = F.norm(u, "Linf")
    return F.VectorField(grid, u.data * (amplitude / sup))


def scalar_band_limited(grid, seed, kmax=4.0):
    rng = np.random.default_rng(seed)
    raw = F.ScalarField(grid, rng.standard_normal(grid.real_shape))
    spec = F.to_spectral(raw) * (grid.k_squared <= kmax * kmax)
    return F.scalar_from_spectral(grid, spec)
