import numpy as np
from hypothesis import given, settings, strategies as st

from hpvem.polybasis import (ScaledMonomialSpace, build_decomposition,
                             dim_poly, monomial_exponents, solve_refined)
from hpvem.verify import POLYGON_KINDS, random_polygon

from conftest import monomial_integral_oracle


def test_dim_poly():
    assert [dim_poly(p) for p in (-1, 0, 1, 2, 3)] == [0, 1, 3, 6, 10]
    for p in range(6):
        assert len(monomial_exponents(p)) == dim_poly(p)


def test_mass_matrix_against_oracle(rng):
    verts = random_polygon(rng, "hexagon")
    space = ScaledMonomialSpace(verts, 3)
    exps = monomial_exponents(3)
    c, h = space.centroid, space.diameter
    for i, (a1, b1) in enumerate(exps):
        for j, (a2, b2) in enumerate(exps):
            # expand the scaled monomial product into raw monomials and
            # integrate each with the Green's-theorem oracle
            ref = 0.0
            from math import comb
            for k1 in range(a1 + a2 + 1):
                for k2 in range(b1 + b2 + 1):
                    coeff = (comb(a1 + a2, k1) * comb(b1 + b2, k2)
                             * (-c[0]) ** (a1 + a2 - k1)
                             * (-c[1]) ** (b1 + b2 - k2))
                    ref += coeff * monomial_integral_oracle(verts, k1, k2)
            ref /= h ** (a1 + b1 + a2 + b2)
            assert abs(space.mass[i, j] - ref) <= 1e-11 * max(1.0, abs(ref))


@settings(deadline=None, max_examples=20)
@given(st.integers(min_value=1, max_value=4),
       st.integers(min_value=0, max_value=10**6))
def test_derivative_and_laplacian_consistency(p, seed):
    rng = np.random.default_rng(seed)
    verts = random_polygon(rng, POLYGON_KINDS[seed % 4])
    space = ScaledMonomialSpace(verts, p)
    c = rng.standard_normal(dim_poly(p))
    pts = verts + 0.3 * (space.centroid - verts)
    eps = 1e-6 * space.diameter
    grad = space.eval_poly_grad(c, pts)
    for axis in (0, 1):
        d = space.derivative_matrix(p, axis) @ c
        step = np.zeros(2)
        step[axis] = eps
        fd = (space.eval_poly(c, pts + step) - space.eval_poly(c, pts - step)) \
            / (2 * eps)
        scale = max(np.abs(grad).max(), 1.0)
        assert np.allclose(space.eval_poly(d, pts), fd, atol=1e-6 * scale)
        assert np.allclose(space.eval_poly(d, pts), grad[:, axis],
                           atol=1e-10 * scale)
    if p >= 2:
        dxx = space.derivative_matrix(p - 1, 0) \
            @ (space.derivative_matrix(p, 0) @ c)
        dyy = space.derivative_matrix(p - 1, 1) \
            @ (space.derivative_matrix(p, 1) @ c)
        lap = space.laplacian_matrix(p) @ c
        assert np.allclose(lap, dxx + dyy,
                           atol=1e-12 * max(1.0, np.abs(lap).max()))


def test_multiply_matches_pointwise(rng):
    verts = random_polygon(rng, "quad")
    space = ScaledMonomialSpace(verts, 5)
    ca = rng.standard_normal(dim_poly(2))
    cb = rng.standard_normal(dim_poly(3))
    prod = space.multiply(ca, cb)
    pts = space.centroid + 0.4 * (verts - space.centroid)
    assert np.allclose(space.eval_poly(prod, pts),
                       space.eval_poly(ca, pts) * space.eval_poly(cb, pts))


def test_decomposition_spans_vector_polynomials(rng):
    for p in range(1, 5):
        verts = random_polygon(rng, "hexagon")
        space = ScaledMonomialSpace(verts, p + 1, 2 * (p + 1) + 3)
        dec = build_decomposition(space, p)
        n = dim_poly(p)
        assert dec.basis.shape == (2 * n, dec.n_total)
        assert dec.n_total == 2 * n
        assert np.linalg.matrix_rank(dec.basis) == 2 * n
        # gram is SPD
        assert np.linalg.eigvalsh(dec.gram).min() > 0.0


def test_solve_refined_on_ill_conditioned_system(rng):
    # condition 1e12: refinement keeps the residual at machine level and the
    # forward error well below the plain-LU floor of cond * eps
    d = np.logspace(0, 12, 30)
    q, _ = np.linalg.qr(rng.standard_normal((30, 30)))
    a = (q * d) @ q.T
    x_ref = rng.standard_normal(30)
    b = a @ x_ref
    x = solve_refined(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-12 * np.linalg.norm(b)
    # moderate conditioning: forward error near the cond * eps data floor
    d8 = np.logspace(0, 6, 30)
    a8 = (q * d8) @ q.T
    x = solve_refined(a8, a8 @ x_ref)
    assert np.linalg.norm(x - x_ref) <= 1e-9 * np.linalg.norm(x_ref)
