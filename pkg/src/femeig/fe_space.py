"""Element bases, degree-of-freedom maps, and the L2 projection.

Local bases are polynomials in barycentric coordinates for the affine
families (Lagrange, per-triangle discontinuous, Crouzeix-Raviart); the
Morley basis is constructed per triangle in scaled physical coordinates
because its normal-derivative functionals do not map affinely.

Local degree-of-freedom order: vertex dofs first, then edge dofs (edge i
is opposite local vertex i; multiple nodes per edge run from the lower
global endpoint to the higher), then interior dofs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .mesh import Mesh

__all__ = [
    "ElementKind",
    "lagrange_p",
    "discontinuous_p",
    "crouzeix_raviart",
    "morley",
    "BasisValues",
    "basis_eval",
    "DofMap",
    "build_dofmap",
    "FeFunction",
    "cell_eval",
    "cell_function_values",
    "l2_project",
    "project_fine_to_coarse",
]

#: quadrature degree used whenever a non-polynomial (analytic) field enters
#: an integral; high enough that quadrature error is negligible next to
#: every discretization error in scope.
ANALYTIC_QUAD_DEGREE = 10


@dataclass(frozen=True)
class ElementKind:
    """One of the supported element families at a fixed polynomial degree."""

    family: str  # "lagrange" | "dg" | "cr" | "morley"
    degree: int

    @property
    def n_local(self) -> int:
        if self.family in ("lagrange", "dg"):
            k = self.degree
            return (k + 1) * (k + 2) // 2
        if self.family == "cr":
            return 3
        return 6  # morley

    @property
    def continuity(self) -> str:
        return {
            "lagrange": "C0",
            "dg": "discontinuous",
            "cr": "midpoint-continuous",
            "morley": "nonconforming",
        }[self.family]

    @property
    def dirichlet_strategy(self) -> str:
        return {
            "lagrange": "strong",
            "dg": "via-penalty",
            "cr": "midpoint",
            "morley": "morley-clamped",
        }[self.family]

    def __str__(self):
        return f"{self.family}{self.degree}"


def lagrange_p(k: int) -> ElementKind:
    if k not in (1, 2, 3):
        raise ValueError(f"Lagrange degree {k} unsupported (use 1..3)")
    return ElementKind("lagrange", k)


def discontinuous_p(l: int) -> ElementKind:
    if l not in (1, 2):
        raise ValueError(f"discontinuous degree {l} unsupported (use 1 or 2)")
    return ElementKind("dg", l)


def crouzeix_raviart() -> ElementKind:
    return ElementKind("cr", 1)


def morley() -> ElementKind:
    return ElementKind("morley", 2)


# ---------------------------------------------------------------------------
# Reference bases in barycentric coordinates.
# ---------------------------------------------------------------------------

#: gradients of the barycentric coordinates on the reference triangle
_GRAD_LAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def _e(i, n=1):
    exp = [0, 0, 0]
    exp[i] = n
    return tuple(exp)


def _lagrange_terms(k: int):
    """Term lists (coef, (e0,e1,e2)) for the nodal Lagrange basis of degree k."""
    if k == 1:
        return [[(1.0, _e(i))] for i in range(3)]
    if k == 2:
        vert = [[(2.0, _e(i, 2)), (-1.0, _e(i))] for i in range(3)]
        edge = []
        for i in range(3):
            a, b = (i + 1) % 3, (i + 2) % 3
            exp = [0, 0, 0]
            exp[a] = 1
            exp[b] = 1
            edge.append([(4.0, tuple(exp))])
        return vert + edge
    # k == 3
    vert = [
        [(4.5, _e(i, 3)), (-4.5, _e(i, 2)), (1.0, _e(i))] for i in range(3)
    ]
    edge = []
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        for heavy in (a, b):  # node closer to vertex `heavy`
            t1 = [0, 0, 0]
            t1[a] += 1
            t1[b] += 1
            t2 = list(t1)
            t2[heavy] += 1
            edge.append([(13.5, tuple(t2)), (-4.5, tuple(t1))])
    center = [[(27.0, (1, 1, 1))]]
    return vert + edge + center


def _cr_terms():
    return [[(1.0, (0, 0, 0)), (-2.0, _e(i))] for i in range(3)]


def _bary_tables(terms, lam):
    """Values and first/second barycentric derivatives of one basis function.

    lam: (npts, 3).  Returns vals (npts,), d (npts, 3), d2 (npts, 3, 3).
    """
    npts = lam.shape[0]
    vals = np.zeros(npts)
    d = np.zeros((npts, 3))
    d2 = np.zeros((npts, 3, 3))
    for coef, exp in terms:
        mono = np.ones(npts)
        for i in range(3):
            if exp[i]:
                mono = mono * lam[:, i] ** exp[i]
        vals += coef * mono
        for i in range(3):
            if exp[i] == 0:
                continue
            dm = coef * exp[i] * _safe_pow(lam[:, i], exp[i] - 1)
            for j in range(3):
                if j != i and exp[j]:
                    dm = dm * lam[:, j] ** exp[j]
            d[:, i] += dm
            # second derivatives d/dlam_i d/dlam_j
            for j in range(3):
                if j == i:
                    if exp[i] >= 2:
                        h = coef * exp[i] * (exp[i] - 1) * _safe_pow(lam[:, i], exp[i] - 2)
                        for m in range(3):
                            if m != i and exp[m]:
                                h = h * lam[:, m] ** exp[m]
                        d2[:, i, i] += h
                elif exp[j]:
                    h = coef * exp[i] * exp[j] * _safe_pow(lam[:, i], exp[i] - 1)
                    h = h * _safe_pow(lam[:, j], exp[j] - 1)
                    for m in range(3):
                        if m != i and m != j and exp[m]:
                            h = h * lam[:, m] ** exp[m]
                    d2[:, i, j] += h
    return vals, d, d2


def _safe_pow(x, n):
    if n == 0:
        return np.ones_like(x)
    return x**n


def _reference_tables(kind: ElementKind, points: np.ndarray):
    """Reference values/gradients/hessians of all local basis functions.

    points: (npts, 2) reference coordinates.  Returns arrays shaped
    (npts, nl), (npts, nl, 2), (npts, nl, 2, 2).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    if kind.family == "morley":
        return _morley_reference_tables(pts)
    if kind.family in ("lagrange", "dg"):
        term_lists = _lagrange_terms(kind.degree)
    elif kind.family == "cr":
        term_lists = _cr_terms()
    else:
        raise ValueError(f"unsupported element kind {kind}")
    nl = len(term_lists)
    npts = lam.shape[0]
    vals = np.empty((npts, nl))
    grads = np.empty((npts, nl, 2))
    hess = np.empty((npts, nl, 2, 2))
    G = _GRAD_LAMBDA
    for j, terms in enumerate(term_lists):
        v, d, d2 = _bary_tables(terms, lam)
        vals[:, j] = v
        grads[:, j] = d @ G
        hess[:, j] = np.einsum("ia,pij,jb->pab", G, d2, G)
    return vals, grads, hess


class BasisValues(NamedTuple):
    values: np.ndarray
    gradients: np.ndarray
    hessians: np.ndarray


def basis_eval(kind: ElementKind, points) -> BasisValues:
    """Values, gradients and Hessians of the local basis on the reference triangle."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam0 = 1.0 - pts[:, 0] - pts[:, 1]
    if (pts < -1e-9).any() or (lam0 < -1e-9).any():
        raise ValueError("point outside the reference triangle")
    return BasisValues(*_reference_tables(kind, pts))


# ---------------------------------------------------------------------------
# Morley basis: constructed per triangle in scaled physical coordinates.
# ---------------------------------------------------------------------------

def _monomial_tables(t):
    """Quadratic monomials {1, x, y, x^2, xy, y^2} with derivatives.

    t: (..., 2).  Returns vals (..., 6), d (..., 6, 2), d2 (6, 2, 2) constant.
    """
    x, y = t[..., 0], t[..., 1]
    one = np.ones_like(x)
    zero = np.zeros_like(x)
    vals = np.stack([one, x, y, x * x, x * y, y * y], axis=-1)
    dx = np.stack([zero, one, zero, 2 * x, y, zero], axis=-1)
    dy = np.stack([zero, zero, one, zero, x, 2 * y], axis=-1)
    d = np.stack([dx, dy], axis=-1)
    d2 = np.zeros((6, 2, 2))
    d2[3, 0, 0] = 2.0
    d2[4, 0, 1] = d2[4, 1, 0] = 1.0
    d2[5, 1, 1] = 2.0
    return vals, d, d2


def _morley_coefficients(tri_vertices, edge_normals):
    """Coefficient matrices of the Morley basis on given triangles.

    tri_vertices: (m, 3, 2); edge_normals: (m, 3, 2), normal of the edge
    opposite local vertex i (any consistent orientation; the dof is the
    derivative along that stored normal).  Returns (coeffs (m, 6, 6),
    centroids (m, 2), scales (m,)); column j of ``coeffs`` holds monomial
    coefficients of basis function j in coordinates (x - centroid)/scale.
    """
    centroids = tri_vertices.mean(axis=1)
    edges = np.linalg.norm(
        tri_vertices - np.roll(tri_vertices, 1, axis=1), axis=2
    )
    scales = edges.max(axis=1)
    tv = (tri_vertices - centroids[:, None, :]) / scales[:, None, None]
    mids = 0.5 * (np.roll(tv, 1, axis=1) + np.roll(tv, 2, axis=1))

    m = len(tri_vertices)
    B = np.empty((m, 6, 6))
    vals, _, _ = _monomial_tables(tv)
    B[:, 0:3, :] = vals
    _, dmid, _ = _monomial_tables(mids)  # (m, 3, 6, 2), derivative in scaled coords
    # physical normal derivative = (1/scale) * n . grad_t
    B[:, 3:6, :] = (
        np.einsum("mikb,mib->mik", dmid, edge_normals) / scales[:, None, None]
    )
    return np.linalg.inv(B), centroids, scales


def _morley_reference_tables(pts):
    verts = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    s = np.sqrt(2.0) / 2.0
    normals = np.array([[[s, s], [-1.0, 0.0], [0.0, -1.0]]])  # outward
    coeffs, centroids, scales = _morley_coefficients(verts, normals)
    t = (pts - centroids[0]) / scales[0]
    vals, d, d2 = _monomial_tables(t)
    values = vals @ coeffs[0]
    grads = np.einsum("pkb,kj->pjb", d, coeffs[0]) / scales[0]
    # quadratics have a constant Hessian; broadcast it over the points
    hess = np.repeat(
        (np.einsum("kab,kj->jab", d2, coeffs[0]) / scales[0] ** 2)[None, :],
        len(t),
        axis=0,
    )
    return values, grads, hess


# ---------------------------------------------------------------------------
# Degree-of-freedom maps.
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DofMap:
    """Global dof layout of one element kind on one mesh.

    Immutable after construction; ``constrained`` marks boundary dofs that
    the element's Dirichlet strategy removes (empty for DG, where the
    boundary condition is imposed weakly by the bilinear form).
    """

    kind: ElementKind
    mesh: Mesh
    cell_dofs: np.ndarray  # (nt, nl) int
    n_dofs: int
    constrained: np.ndarray  # (n_dofs,) bool
    morley_coeffs: np.ndarray | None = None
    morley_centroids: np.ndarray | None = None
    morley_scales: np.ndarray | None = None

    def __post_init__(self):
        self.cell_dofs.setflags(write=False)
        self.constrained.setflags(write=False)

    @cached_property
    def free(self) -> np.ndarray:
        f = np.flatnonzero(~self.constrained)
        f.setflags(write=False)
        return f

    @property
    def n_free(self) -> int:
        return len(self.free)

    @cached_property
    def free_index(self) -> np.ndarray:
        """Global dof -> position among free dofs, or -1 if constrained."""
        idx = np.full(self.n_dofs, -1, dtype=np.int64)
        idx[self.free] = np.arange(self.n_free)
        idx.setflags(write=False)
        return idx

    @cached_property
    def mass_matrix(self):
        from . import assembly

        return assembly.assemble_mass(self)

    @cached_property
    def mass_free(self):
        M = self.mass_matrix.tocsr()
        return M[self.free][:, self.free]

    @cached_property
    def mass_factor(self):
        from scipy.sparse.linalg import splu

        return splu(self.mass_free.tocsc())

    def full_coeffs(self, free_coeffs: np.ndarray) -> np.ndarray:
        """Scatter free-dof coefficients into the full dof vector (constrained = 0)."""
        full = np.zeros(self.n_dofs)
        full[self.free] = free_coeffs
        return full


def build_dofmap(mesh: Mesh, kind: ElementKind) -> DofMap:
    nt = mesh.n_triangles
    nv = mesh.n_vertices
    ne = mesh.n_edges
    if kind.family == "dg":
        nl = kind.n_local
        cell_dofs = np.arange(nt * nl, dtype=np.int64).reshape(nt, nl)
        constrained = np.zeros(nt * nl, dtype=bool)
        return DofMap(kind, mesh, cell_dofs, nt * nl, constrained)

    if kind.family == "cr":
        cell_dofs = mesh.tri_edges.astype(np.int64)
        constrained = mesh.edge_is_boundary.copy()
        return DofMap(kind, mesh, cell_dofs, ne, constrained)

    if kind.family == "morley":
        cell_dofs = np.hstack([mesh.triangles, nv + mesh.tri_edges]).astype(np.int64)
        constrained = np.concatenate(
            [mesh.vertex_is_boundary, mesh.edge_is_boundary]
        )
        verts = mesh.vertices[mesh.triangles]
        normals = mesh.edge_normals[mesh.tri_edges]
        coeffs, centroids, scales = _morley_coefficients(verts, normals)
        return DofMap(
            kind,
            mesh,
            cell_dofs,
            nv + ne,
            constrained,
            morley_coeffs=coeffs,
            morley_centroids=centroids,
            morley_scales=scales,
        )

    # Lagrange
    k = kind.degree
    per_edge = k - 1
    n_interior = (k - 1) * (k - 2) // 2  # 0 or 1 for k <= 3
    n_dofs = nv + ne * per_edge + nt * n_interior
    cols = [mesh.triangles.astype(np.int64)]
    if per_edge:
        edge_base = nv + mesh.tri_edges.astype(np.int64) * per_edge
        if per_edge == 1:
            cols.append(edge_base)
        else:
            # Two nodes per edge: local order runs from local endpoint a to b
            # (a = local vertex (i+1)%3); flip when the global edge is stored
            # the other way around so neighbours agree on the node order.
            a = mesh.triangles[:, [1, 2, 0]]
            lo = mesh.edge_vertices[mesh.tri_edges, 0]
            flip = a != lo  # (nt, 3)
            first = edge_base + np.where(flip, 1, 0)
            second = edge_base + np.where(flip, 0, 1)
            inter = np.empty((nt, 6), dtype=np.int64)
            inter[:, 0::2] = first
            inter[:, 1::2] = second
            cols.append(inter)
    if n_interior:
        base = nv + ne * per_edge
        cols.append(base + np.arange(nt, dtype=np.int64)[:, None])
    cell_dofs = np.hstack(cols)

    constrained = np.zeros(n_dofs, dtype=bool)
    constrained[:nv] = mesh.vertex_is_boundary
    if per_edge:
        bnd_edges = np.flatnonzero(mesh.edge_is_boundary)
        for j in range(per_edge):
            constrained[nv + bnd_edges * per_edge + j] = True
    return DofMap(kind, mesh, cell_dofs, n_dofs, constrained)


# ---------------------------------------------------------------------------
# Evaluation on mesh cells.
# ---------------------------------------------------------------------------

def cell_eval(dofmap: DofMap, cells, ref_points, order: int = 0):
    """Physical values (and derivatives) of the local basis on mesh cells.

    cells: int array (m,) or None for all triangles.  ref_points: (q, 2)
    shared by all cells, or (m, q, 2) per cell.  Returns ``values`` of
    shape (m, q, nl) for order 0, plus gradients (m, q, nl, 2) for order
    1 and Hessians (m, q, nl, 2, 2) for order 2.
    """
    mesh = dofmap.mesh
    if cells is None:
        cells = np.arange(mesh.n_triangles)
    cells = np.asarray(cells, dtype=np.int64)
    ref = np.asarray(ref_points, dtype=float)
    per_cell = ref.ndim == 3
    m = len(cells)
    q = ref.shape[-2]

    if dofmap.kind.family == "morley":
        return _morley_cell_eval(dofmap, cells, ref, per_cell, order)

    if per_cell:
        flat = ref.reshape(m * q, 2)
        vals, grads, hess = _reference_tables(dofmap.kind, flat)
        nl = vals.shape[1]
        vals = vals.reshape(m, q, nl)
        grads = grads.reshape(m, q, nl, 2)
        hess = hess.reshape(m, q, nl, 2, 2)
    else:
        vals, grads, hess = _reference_tables(dofmap.kind, ref)
        nl = vals.shape[1]
        vals = np.broadcast_to(vals, (m, q, nl))
        grads = np.broadcast_to(grads, (m, q, nl, 2))
        hess = np.broadcast_to(hess, (m, q, nl, 2, 2))

    out = [vals]
    if order >= 1:
        Jinv = mesh.jacobian_invs[cells]
        out.append(np.einsum("mqli,mia->mqla", grads, Jinv))
    if order >= 2:
        Jinv = mesh.jacobian_invs[cells]
        out.append(np.einsum("mia,mqlij,mjb->mqlab", Jinv, hess, Jinv))
    return out[0] if order == 0 else tuple(out)


def _morley_cell_eval(dofmap, cells, ref, per_cell, order):
    mesh = dofmap.mesh
    m = len(cells)
    q = ref.shape[-2]
    v0 = mesh.vertices[mesh.triangles[cells, 0]]
    J = mesh.jacobians[cells]
    if per_cell:
        phys = v0[:, None, :] + np.einsum("mij,mqj->mqi", J, ref)
    else:
        phys = v0[:, None, :] + np.einsum("mij,qj->mqi", J, ref)
    scales = dofmap.morley_scales[cells]
    t = (phys - dofmap.morley_centroids[cells][:, None, :]) / scales[:, None, None]
    C = dofmap.morley_coeffs[cells]
    vals_m, d_m, d2_m = _monomial_tables(t)
    vals = np.einsum("mqk,mkl->mql", vals_m, C)
    out = [vals]
    if order >= 1:
        grads = np.einsum("mqkb,mkl->mqlb", d_m, C) / scales[:, None, None, None]
        out.append(grads)
    if order >= 2:
        hess = np.einsum("kab,mkl->mlab", d2_m, C) / (scales**2)[:, None, None, None]
        out.append(np.broadcast_to(hess[:, None], (m, q, 6, 2, 2)))
    return out[0] if order == 0 else tuple(out)


def cell_function_values(dofmap: DofMap, full_coeffs, cells, ref_points):
    """Values of the FE function with given full coefficients: (m, q)."""
    if cells is None:
        cells = np.arange(dofmap.mesh.n_triangles)
    vals = cell_eval(dofmap, cells, ref_points, order=0)
    return np.einsum("mql,ml->mq", vals, full_coeffs[dofmap.cell_dofs[cells]])


@dataclass(eq=False)
class FeFunction:
    """Finite element function: one coefficient per free dof."""

    dofmap: DofMap
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != self.dofmap.n_free:
            raise ValueError("coefficient length must equal the free dof count")

    @property
    def full(self) -> np.ndarray:
        return self.dofmap.full_coeffs(self.coeffs)

    def __call__(self, points) -> np.ndarray:
        """Evaluate at physical points (brute-force cell lookup; test scale)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        mesh = self.dofmap.mesh
        cells = _locate(mesh, pts)
        v0 = mesh.vertices[mesh.triangles[cells, 0]]
        ref = np.einsum("mij,mj->mi", mesh.jacobian_invs[cells], pts - v0)
        vals = cell_eval(self.dofmap, cells, ref[:, None, :], order=0)
        full = self.full
        return np.einsum("mql,ml->mq", vals, full[self.dofmap.cell_dofs[cells]])[:, 0]


def _locate(mesh: Mesh, pts: np.ndarray) -> np.ndarray:
    """Containing triangle per point (first match wins on shared edges)."""
    d = pts[:, None, :] - mesh.vertices[mesh.triangles[:, 0]][None, :, :]
    ref = np.einsum("tij,ptj->pti", mesh.jacobian_invs, d)
    lam0 = 1.0 - ref[..., 0] - ref[..., 1]
    inside = (ref[..., 0] >= -1e-12) & (ref[..., 1] >= -1e-12) & (lam0 >= -1e-12)
    if not inside.any(axis=1).all():
        raise ValueError("point outside the mesh")
    return np.argmax(inside, axis=1)


# ---------------------------------------------------------------------------
# L2 projection.
# ---------------------------------------------------------------------------

def l2_project(dofmap: DofMap, f, quad_degree: int | None = None) -> FeFunction:
    """L2 projection of ``f`` onto the (constrained) FE space.

    ``f`` is a callable ``f(x, y)`` accepting arrays.  The residual of the
    projection is orthogonal to every basis function of the space.
    """
    from . import assembly

    if quad_degree is None:
        quad_degree = ANALYTIC_QUAD_DEGREE
    b = assembly.load_vector(dofmap, f, quad_degree)
    coeffs = dofmap.mass_factor.solve(b[dofmap.free])
    return FeFunction(dofmap, coeffs)


def project_fine_to_coarse(
    fine: DofMap, fine_full_coeffs: np.ndarray, coarse: DofMap,
    quad_degree: int | None = None,
) -> FeFunction:
    """L2-project a fine-mesh FE function onto a coarser space of the same family tree.

    Both meshes must come from the same refinement family (the fine mesh a
    uniform refinement of the coarse one); exactness of the cross-mesh
    integrals then only needs degree >= deg_fine + deg_coarse.
    """
    from .quadrature import triangle_rule

    fmesh, cmesh = fine.mesh, coarse.mesh
    if fmesh.domain.name != cmesh.domain.name:
        raise ValueError("meshes triangulate different domains")
    dlev = fmesh.level - cmesh.level
    if dlev < 0:
        raise ValueError("fine mesh must be at least as fine as the coarse mesh")
    if quad_degree is None:
        quad_degree = fine.kind.degree + coarse.kind.degree
    rule = triangle_rule(quad_degree)
    xy = rule.xy

    nf = fmesh.n_triangles
    anc = np.arange(nf) // 4**dlev

    u_fine = cell_function_values(fine, fine_full_coeffs, None, xy)  # (nf, q)

    v0f = fmesh.vertices[fmesh.triangles[:, 0]]
    phys = v0f[:, None, :] + np.einsum("mij,qj->mqi", fmesh.jacobians, xy)
    v0c = cmesh.vertices[cmesh.triangles[anc, 0]]
    ref_c = np.einsum(
        "mij,mqj->mqi", cmesh.jacobian_invs[anc], phys - v0c[:, None, :]
    )
    phi_c = cell_eval(coarse, anc, ref_c, order=0)  # (nf, q, nlc)

    wdet = rule.weights[None, :] * fmesh.jacobian_dets[:, None]
    contrib = np.einsum("mq,mq,mql->ml", wdet, u_fine, phi_c)
    b = np.zeros(coarse.n_dofs)
    np.add.at(b, coarse.cell_dofs[anc], contrib)

    coeffs = coarse.mass_factor.solve(b[coarse.free])
    return FeFunction(coarse, coeffs)
