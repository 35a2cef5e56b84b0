import numpy as np
import pytest

from conftest import l2_error_against, l2_norm_callable, sin_mode
from femeig import fe_space as fs
from femeig.fe_space import (
    basis_eval,
    build_dofmap,
    crouzeix_raviart,
    discontinuous_p,
    l2_project,
    lagrange_p,
    morley,
)
from femeig.harness import fit_rate
from femeig.mesh import UNIT_SQUARE, build_mesh

RNG = np.random.default_rng(20240817)


def random_ref_points(n):
    # uniform in the reference triangle, strictly interior
    a = RNG.uniform(0.05, 0.95, (n, 2))
    flip = a.sum(axis=1) > 1.0
    a[flip] = 1.0 - a[flip]
    return a


def test_partition_of_unity():
    pts = random_ref_points(20)
    for kind in (lagrange_p(1), lagrange_p(2), lagrange_p(3), crouzeix_raviart()):
        vals = basis_eval(kind, pts).values
        assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-12)


def test_p1_barycenter_values():
    vals = basis_eval(lagrange_p(1), [[1 / 3, 1 / 3]]).values
    assert np.allclose(vals, 1.0 / 3.0, atol=1e-15)


def test_cr_midpoint_kronecker():
    mids = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])
    vals = basis_eval(crouzeix_raviart(), mids).values
    assert np.allclose(vals, np.eye(3), atol=1e-14)


@pytest.mark.parametrize("kind", [lagrange_p(1), lagrange_p(2), lagrange_p(3), morley()])
def test_gradients_match_finite_differences(kind):
    pts = random_ref_points(3)
    step = 1e-6
    got = basis_eval(kind, pts).gradients
    for axis in range(2):
        dp = pts.copy()
        dm = pts.copy()
        dp[:, axis] += step
        dm[:, axis] -= step
        fd = (basis_eval(kind, dp).values - basis_eval(kind, dm).values) / (2 * step)
        assert np.max(np.abs(got[:, :, axis] - fd)) < 1e-7


@pytest.mark.parametrize("kind", [lagrange_p(2), lagrange_p(3), morley()])
def test_hessians_match_finite_differences(kind):
    pts = random_ref_points(3)
    step = 1e-5
    got = basis_eval(kind, pts).hessians
    for a in range(2):
        dp = pts.copy()
        dm = pts.copy()
        dp[:, a] += step
        dm[:, a] -= step
        fd = (basis_eval(kind, dp).gradients - basis_eval(kind, dm).gradients) / (
            2 * step
        )
        assert np.max(np.abs(got[..., a] - fd)) < 1e-6


def test_morley_kronecker_biorthogonality():
    kind = morley()
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    vals = basis_eval(kind, verts).values
    assert np.allclose(vals, np.eye(6)[:3], atol=1e-12)
    mids = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])
    s = np.sqrt(0.5)
    normals = np.array([[s, s], [-1.0, 0.0], [0.0, -1.0]])
    grads = basis_eval(kind, mids).gradients
    nd = np.einsum("pjb,pb->pj", grads, normals)
    assert np.allclose(nd, np.eye(6)[3:], atol=1e-12)


def test_basis_eval_rejects_outside_point():
    with pytest.raises(ValueError):
        basis_eval(lagrange_p(1), [[0.8, 0.8]])


def test_dofmap_counts_level1_square():
    mesh = build_mesh(UNIT_SQUARE, 1)
    dm = build_dofmap(mesh, lagrange_p(1))
    assert dm.n_free == 1  # only the center vertex survives
    dg = build_dofmap(mesh, discontinuous_p(1))
    assert dg.n_dofs == 24 and dg.n_free == 24
    cr = build_dofmap(mesh, crouzeix_raviart())
    assert cr.n_free == 8  # interior edge count
    mo = build_dofmap(mesh, morley())
    assert mo.n_dofs == mesh.n_vertices + mesh.n_edges
    assert mo.n_free == 1 + 8  # interior vertices + interior edges


def test_every_dof_referenced():
    mesh = build_mesh(UNIT_SQUARE, 2)
    for kind in (lagrange_p(2), lagrange_p(3), crouzeix_raviart(), morley()):
        dm = build_dofmap(mesh, kind)
        counts = np.bincount(dm.cell_dofs.ravel(), minlength=dm.n_dofs)
        assert counts.min() >= 1
    dg = build_dofmap(mesh, discontinuous_p(2))
    counts = np.bincount(dg.cell_dofs.ravel(), minlength=dg.n_dofs)
    assert (counts == 1).all()


def test_p3_continuous_across_edges():
    # random global coefficients must give matching traces from both sides
    # of every interior edge, which pins the shared edge-node orientation
    mesh = build_mesh(UNIT_SQUARE, 2)
    dm = build_dofmap(mesh, lagrange_p(3))
    full = RNG.standard_normal(dm.n_dofs)
    s = np.linspace(0.1, 0.9, 5)
    for e in np.flatnonzero(~mesh.edge_is_boundary)[:12]:
        a, b = mesh.edge_vertices[e]
        pts = mesh.vertices[a] + s[:, None] * (mesh.vertices[b] - mesh.vertices[a])
        traces = []
        for t in mesh.edge_tris[e]:
            v0 = mesh.vertices[mesh.triangles[t, 0]]
            ref = (pts - v0) @ mesh.jacobian_invs[t].T
            vals = fs.cell_eval(dm, [t], ref[None, :, :], order=0)
            traces.append(vals[0] @ full[dm.cell_dofs[t]])
        assert np.max(np.abs(traces[0] - traces[1])) < 1e-12


@pytest.mark.parametrize(
    "kind", [lagrange_p(1), lagrange_p(2), discontinuous_p(1), crouzeix_raviart()]
)
def test_projection_reproduces_members(kind):
    # project a function of the space; coefficients must be recovered exactly
    mesh = build_mesh(UNIT_SQUARE, 2)
    dm = build_dofmap(mesh, kind)
    coeffs = RNG.standard_normal(dm.n_free)
    u = fs.FeFunction(dm, coeffs)

    def as_field(x, y):
        pts = np.column_stack([np.ravel(x), np.ravel(y)])
        return u(pts).reshape(np.shape(x))

    again = l2_project(dm, as_field)
    assert np.max(np.abs(again.coeffs - coeffs)) < 1e-12 * max(
        1.0, np.max(np.abs(coeffs))
    )


def test_projection_rate_p1():
    f = sin_mode(1, 1)
    errs, hs = [], []
    for level in (2, 3, 4, 5):
        mesh = build_mesh(UNIT_SQUARE, level)
        dm = build_dofmap(mesh, lagrange_p(1))
        p = l2_project(dm, f)
        errs.append(l2_error_against(dm, p.full, f))
        hs.append(mesh.h)
    rate = fit_rate(hs[-3:], errs[-3:])
    assert rate == pytest.approx(2.0, abs=0.1)


def test_projection_non_expansive():
    mesh = build_mesh(UNIT_SQUARE, 2)
    dm = build_dofmap(mesh, lagrange_p(1))
    M = dm.mass_free
    for _ in range(5):
        c = RNG.standard_normal(6)

        def poly(x, y, c=c):
            return (
                c[0]
                + c[1] * x
                + c[2] * y
                + c[3] * x * y
                + c[4] * x**2
                + c[5] * y**2
            )

        p = l2_project(dm, poly)
        norm_p = np.sqrt(p.coeffs @ (M @ p.coeffs))
        norm_f = l2_norm_callable(mesh, poly)
        assert norm_p <= norm_f + 1e-12


@pytest.mark.parametrize(
    "kind", [lagrange_p(1), discontinuous_p(1), crouzeix_raviart(), morley()]
)
def test_projection_error_decreases_monotonically(kind):
    fields = [sin_mode(1, 1), sin_mode(2, 1), lambda x, y: x * (1 - x) * y * (1 - y)]
    for f in fields:
        errs = []
        for level in (1, 2, 3, 4):
            dm = build_dofmap(build_mesh(UNIT_SQUARE, level), kind)
            p = l2_project(dm, f)
            errs.append(l2_error_against(dm, p.full, f))
        assert all(errs[i + 1] < errs[i] for i in range(len(errs) - 1))


def test_projection_galerkin_orthogonality():
    mesh = build_mesh(UNIT_SQUARE, 2)
    dm = build_dofmap(mesh, lagrange_p(2))
    f = sin_mode(1, 2)
    p = l2_project(dm, f)
    # residual of the projection must be orthogonal to the space:
    # (f, phi) - (p_n f, phi) = b - M c = 0 on free dofs
    from femeig.assembly import load_vector

    b = load_vector(dm, f, 10)[dm.free]
    gap = b - dm.mass_free @ p.coeffs
    assert np.max(np.abs(gap)) < 1e-10 * l2_norm_callable(mesh, f)


def test_unsupported_kinds_rejected():
    with pytest.raises(ValueError):
        lagrange_p(4)
    with pytest.raises(ValueError):
        discontinuous_p(3)
