from __future__ import annotations

import numpy as np
import pytest

from surfhel.calculus import harmonic_basis, neumann_on_surface
from surfhel.geometry import FourierTorus, build_grid
from surfhel.helicity import helicity_matrix

# Torus whose cross-section centre winds around the symmetry axis, giving a
# clearly nonzero H(gamma); used where the rotating ellipse is too symmetric.
HELICAL = FourierTorus(((0, 0, 2.0, 0.0), (1, 0, 0.6, 0.6), (0, 1, 0.4, -0.4)), nfp=2)


@pytest.fixture(scope="session")
def standard():
    return FourierTorus.standard()


@pytest.fixture(scope="session")
def ellipse():
    return FourierTorus.rotating_ellipse()


@pytest.fixture(scope="session")
def helical():
    return HELICAL


@pytest.fixture(scope="session")
def grid64(standard):
    return build_grid(standard, 64)


@pytest.fixture(scope="session")
def grid32(standard):
    return build_grid(standard, 32)


@pytest.fixture(scope="session")
def egrid64(ellipse):
    return build_grid(ellipse, 64)


@pytest.fixture(scope="session")
def hgrid64(helical):
    return build_grid(helical, 64)


@pytest.fixture(scope="session")
def basis64(grid64):
    return harmonic_basis(grid64)


@pytest.fixture(scope="session")
def basis32(grid32):
    return harmonic_basis(grid32)


@pytest.fixture(scope="session")
def ebasis64(egrid64):
    return harmonic_basis(egrid64)


@pytest.fixture(scope="session")
def hbasis64(hgrid64):
    return harmonic_basis(hgrid64)


@pytest.fixture(scope="session")
def matrix64(basis64):
    return helicity_matrix(basis64)


@pytest.fixture(scope="session")
def ematrix64(ebasis64):
    return helicity_matrix(ebasis64)


@pytest.fixture(scope="session")
def hmatrix64(hbasis64):
    return helicity_matrix(hbasis64)


@pytest.fixture(scope="session")
def gamma_un64(grid64):
    """e_phi / rho on the standard torus."""
    return neumann_on_surface(grid64)


@pytest.fixture(scope="session")
def coil_problem():
    from surfhel.coil import build_problem

    return build_problem(FourierTorus.standard(), FourierTorus.standard(2.0, 0.55), res=64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
