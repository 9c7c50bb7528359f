import numpy as np
import pytest

from hpvem import mesh as meshmod
from hpvem.verify import random_polygon, single_cell_mesh  # noqa: F401


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lshape12():
    return meshmod.load_mesh("lshape(2)")


@pytest.fixture
def hanging_mesh():
    """square(2) with one cell split: hanging nodes on two internal edges."""
    return meshmod.refine(meshmod.load_mesh("square(2)"), {0})


def monomial_integral_oracle(verts: np.ndarray, a: int, b: int) -> float:
    """Independent oracle for the integral of x^a y^b over a polygon via
    Green's theorem: int x^a y^b dA = oint x^(a+1) y^b / (a+1) dy, with the
    edge line integrals done by Gauss rules of guaranteed exactness."""
    from numpy.polynomial.legendre import leggauss
    t, w = leggauss((a + b + 2) // 2 + 2)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    total = 0.0
    n = len(verts)
    for i in range(n):
        p0, p1 = verts[i], verts[(i + 1) % n]
        x = p0[0] + t * (p1[0] - p0[0])
        y = p0[1] + t * (p1[1] - p0[1])
        total += float(np.dot(w, x ** (a + 1) * y ** b)) * (p1[1] - p0[1])
    return total / (a + 1)
