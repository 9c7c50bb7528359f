import numpy as np
from hypothesis import given, settings, strategies as st

from hpvem import quadrature
from hpvem.verify import random_polygon

from conftest import monomial_integral_oracle


def _check_exactness(verts: np.ndarray, degree: int, rule) -> None:
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = float(np.dot(rule.weights,
                               rule.points[:, 0] ** a * rule.points[:, 1] ** b))
            ref = monomial_integral_oracle(verts, a, b)
            assert abs(val - ref) <= 1e-12 * max(1.0, abs(ref)), (a, b)


@settings(deadline=None, max_examples=25)
@given(st.integers(min_value=0, max_value=6), st.integers(min_value=0, max_value=3),
       st.integers(min_value=0, max_value=10**6))
def test_polygon_quadrature_exact_on_polynomials(degree, kind_i, seed):
    rng = np.random.default_rng(seed)
    from hpvem.verify import POLYGON_KINDS
    verts = random_polygon(rng, POLYGON_KINDS[kind_i])
    rule = quadrature.polygon_quadrature(verts, degree)
    assert rule.weights.min() > 0.0
    _check_exactness(verts, degree, rule)


def test_edge_quadrature_exact():
    a, b = np.array([0.2, -1.0]), np.array([1.5, 0.7])
    rule = quadrature.edge_quadrature(a, b, 4)
    length = np.linalg.norm(b - a)
    assert np.isclose(rule.weights.sum(), length)
    # integrate t^6 along the edge (degree 2*4-2 = 6 exact)
    t = np.linalg.norm(rule.points - a, axis=1) / length
    assert np.isclose(float(np.dot(rule.weights, t ** 6)), length / 7.0)


def test_graded_quadrature_matches_plain_on_polynomials():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    graded = quadrature.graded_polygon_quadrature(verts, np.zeros(2), 5)
    for a, b in ((0, 0), (2, 1), (3, 2)):
        val = float(np.dot(graded.weights,
                           graded.points[:, 0] ** a * graded.points[:, 1] ** b))
        ref = monomial_integral_oracle(verts, a, b)
        assert abs(val - ref) <= 1e-12 * max(1.0, abs(ref))


def test_graded_quadrature_resolves_corner_singularity():
    """int_{(0,1)^2} (x^2+y^2)^(-1/3) dA: the r^(-2/3) integrand models the
    squared gradient of the corner solution; plain rules of the same degree
    miss several digits."""
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    f = lambda pts: (pts[:, 0] ** 2 + pts[:, 1] ** 2) ** (-1.0 / 3.0)
    graded = quadrature.graded_polygon_quadrature(verts, np.zeros(2), 12)
    val = float(np.dot(graded.weights, f(graded.points)))
    # reference from a very deep graded rule
    deep = quadrature.graded_polygon_quadrature(verts, np.zeros(2), 20,
                                                levels=40)
    ref = float(np.dot(deep.weights, f(deep.points)))
    assert abs(val - ref) <= 5e-9 * abs(ref)
    plain = quadrature.polygon_quadrature(verts, 12)
    assert abs(float(np.dot(plain.weights, f(plain.points))) - ref) > 1e-5
