import numpy as np
from hypothesis import given, settings, strategies as st

from hpvem.mixed import FluxElement
from hpvem.polybasis import dim_poly
from hpvem.verify import POLYGON_KINDS, random_polygon, single_cell_mesh


def _pad(c, n):
    out = np.zeros(n)
    out[:len(c)] = c
    return out


def test_dof_layout(rng):
    for p in range(0, 4):
        verts = random_polygon(rng, "hexagon")
        fe = FluxElement(single_cell_mesh(verts), 0, p)
        n_e = len(verts)
        assert fe.n_dof == n_e * (p + 1) + (dim_poly(p) - 1) + fe.n_perp_mom
        assert fe.grad_offset == n_e * (p + 1)


@settings(deadline=None, max_examples=15)
@given(st.integers(min_value=0, max_value=4),
       st.integers(min_value=0, max_value=10**6))
def test_polynomial_flux_reproduction(p, seed):
    rng = np.random.default_rng(seed)
    verts = random_polygon(rng, POLYGON_KINDS[seed % 4])
    fe = FluxElement(single_cell_mesh(verts), 0, p)
    cx = rng.standard_normal(dim_poly(p))
    cy = rng.standard_normal(dim_poly(p))
    dofs = fe.interpolate_poly(cx, cy)
    proj = fe.pi0_matrix @ dofs
    half = len(proj) // 2
    pts = verts + 0.3 * (verts.mean(axis=0) - verts)
    for got, want in ((proj[:half], cx), (proj[half:], cy)):
        err = np.abs(fe.space.eval_poly(got - _pad(want, half), pts)).max()
        ref = max(np.abs(fe.space.eval_poly(_pad(want, half), pts)).max(), 1.0)
        assert err <= 1e-9 * ref
    # exact divergence
    dx = fe.space.derivative_matrix(p, 0) @ cx \
        + fe.space.derivative_matrix(p, 1) @ cy
    d = fe.div_matrix @ dofs
    err = np.abs(fe.space.eval_poly(d - _pad(dx, len(d)), pts)).max()
    assert err <= 1e-8 * max(np.abs(dx).max(initial=0.0), 1.0) / fe.h \
        + 1e-8


def test_mass_matrix_spd_and_consistent(rng):
    for p in range(0, 5):
        verts = random_polygon(rng, "quad")
        fe = FluxElement(single_cell_mesh(verts), 0, p)
        w = np.linalg.eigvalsh(fe.mass_matrix)
        assert w.min() > 0.0
        # consistency: dof^T M dof = ||tau||^2 for polynomial tau
        cx = rng.standard_normal(dim_poly(p))
        cy = rng.standard_normal(dim_poly(p))
        dofs = fe.interpolate_poly(cx, cy)
        n_big = fe.space.dim
        h = fe.space.mass
        ref = _pad(cx, n_big) @ h @ _pad(cx, n_big) \
            + _pad(cy, n_big) @ h @ _pad(cy, n_big)
        assert abs(dofs @ fe.mass_matrix @ dofs - ref) <= 1e-9 * ref


def test_dilation_scaling(rng):
    """Under x -> 2x the same DOF vector must carry exactly 4x the energy
    (both consistency and stabilization parts)."""
    verts = random_polygon(rng, "hexagon")
    for p in range(0, 4):
        fe1 = FluxElement(single_cell_mesh(verts), 0, p)
        fe2 = FluxElement(single_cell_mesh(2.0 * verts), 0, p)
        dofs = np.random.default_rng(0).standard_normal(fe1.n_dof)
        e1 = dofs @ fe1.mass_matrix @ dofs
        e2 = dofs @ fe2.mass_matrix @ dofs
        assert abs(e2 / e1 - 4.0) <= 1e-10
        s1 = dofs @ fe1.stab_matrix @ dofs
        s2 = dofs @ fe2.stab_matrix @ dofs
        if s1 > 1e-14 * e1:
            assert abs(s2 / s1 - 4.0) <= 1e-8


def test_stab_scale_applied(rng):
    verts = random_polygon(rng, "quad")
    mesh = single_cell_mesh(verts)
    base = FluxElement(mesh, 0, 2, stab_scale=1.0)
    scaled = FluxElement(mesh, 0, 2, stab_scale=5.0)
    assert np.allclose(scaled.stab_matrix, 5.0 * base.stab_matrix)
    assert np.allclose(FluxElement(mesh, 0, 2).stab_matrix,
                       FluxElement.STAB_SCALE * base.stab_matrix)


def test_interpolate_matches_interpolate_poly(rng):
    verts = random_polygon(rng, "quad")
    fe = FluxElement(single_cell_mesh(verts), 0, 2)
    cx = rng.standard_normal(dim_poly(2))
    cy = rng.standard_normal(dim_poly(2))

    def field(pts):
        return np.stack([fe.space.eval_poly(cx, pts),
                         fe.space.eval_poly(cy, pts)], axis=1)

    assert np.allclose(fe.interpolate(field), fe.interpolate_poly(cx, cy),
                       atol=1e-11)


def test_lift_dofs_exact_on_polynomials(rng):
    """Embedding a degree-p polynomial flux into a degree-q element keeps
    every projection exact."""
    verts = random_polygon(rng, "hexagon")
    mesh = single_cell_mesh(verts)
    for p, q in ((0, 2), (1, 3), (2, 4)):
        src = FluxElement(mesh, 0, p)
        dst = FluxElement(mesh, 0, q)
        cx = rng.standard_normal(dim_poly(p))
        cy = rng.standard_normal(dim_poly(p))
        lifted = src.lift_dofs(src.interpolate_poly(cx, cy), dst)
        nq = dim_poly(q)
        direct = dst.interpolate_poly(_pad(cx, nq), _pad(cy, nq))
        assert np.abs(lifted - direct).max() <= 1e-10 * \
            max(1.0, np.abs(direct).max())


def test_lift_identity_on_same_degree(rng):
    verts = random_polygon(rng, "quad")
    mesh = single_cell_mesh(verts)
    fe = FluxElement(mesh, 0, 3)
    dofs = rng.standard_normal(fe.n_dof)
    assert np.allclose(fe.lift_dofs(dofs, fe), dofs, atol=1e-12)
