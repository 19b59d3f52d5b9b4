import numpy as np
import pytest

from hardwall.green import green_finite
from hardwall.lattice import ShapeSpec, build_domain
from hardwall.sampler import BoundaryCondition

# Watson's integral: G(0,0) for the simple random walk on Z^3
G_DIAG_D3 = 1.5163860591519780
# continuum Newtonian capacity (kernel R_3/|r|) of the unit ball, 2*pi/3
CAP_UNIT_BALL = 2.0943951023931953
# same for the unit cube (side 1); literature value of the normalized
# electrostatic capacity C/(4 pi eps0 a) = 0.6606782 gives 2*pi*0.6606782/... ;
# in this kernel normalization cap(cube) = 1.3837
CAP_UNIT_CUBE = 1.3837
# Coulomb self-energy of the unit cube: int int |u - v|^{-1} du dv
CUBE_SELF_ENERGY = 1.88231264


def box_domain(L, d=3, padding=2):
    """Lattice cube {-k..k}^d with exactly L^d sites (L odd)."""
    if L == 1:
        return build_domain(ShapeSpec(kind="ball", radius=0.5), 1, d, padding=padding)
    N = L - 1
    return build_domain(ShapeSpec(kind="box", sides=(L / N,) * d), N, d, padding=padding)


@pytest.fixture(scope="session")
def box5():
    return box_domain(5)


@pytest.fixture(scope="session")
def box3():
    return box_domain(3)


@pytest.fixture(scope="session")
def green5(box5):
    return green_finite(box5)


@pytest.fixture(scope="session")
def green3(box3):
    return green_finite(box3)


@pytest.fixture(scope="session")
def zero_bc():
    return BoundaryCondition()


def neumann_green(domain, terms=4000, tol=1e-13):
    """Independent Green-function oracle: G = sum_k P^k as a plain power
    series over the site-restricted transition matrix."""
    n = domain.n_sites
    sites = domain.sites
    P = np.zeros((n, n))
    index = {tuple(s): i for i, s in enumerate(sites)}
    for i, s in enumerate(sites):
        for axis in range(domain.d):
            for step in (1, -1):
                nb = list(s)
                nb[axis] += step
                j = index.get(tuple(nb))
                if j is not None:
                    P[i, j] += 1.0 / (2.0 * domain.d)
    G = np.eye(n)
    term = np.eye(n)
    for _ in range(terms):
        term = term @ P
        G += term
        if np.max(np.abs(term)) < tol:
            return G
    raise RuntimeError("Neumann series did not converge")
