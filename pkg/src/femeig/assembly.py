"""Assembly of the mass matrix and the five stiffness forms.

Second order (Dirichlet) problem:

* ``assemble_conforming`` -- grad-grad form on Lagrange spaces.
* ``assemble_sipdg``      -- symmetric interior penalty DG: element
  gradients minus the two consistency flux terms plus the jump penalty
  ``gamma/|e|``.  The penalty enters with a positive sign; that is the
  coercive convention, and the linearity of the form in gamma is exposed
  through :func:`sipdg_parts`.
* ``assemble_cr``         -- elementwise gradients on the nonconforming
  Crouzeix-Raviart space.

Fourth order (clamped plate) problem:

* ``assemble_c0ipg``  -- elementwise Hessian Frobenius products plus the
  normal-derivative flux terms and the ``sigma/|e|`` jump penalty; on
  boundary edges the one-sided convention jump = -dv/dn, average =
  d^2v/dn^2 (with the outward normal) enforces the clamped slope weakly.
* ``assemble_morley`` -- elementwise Hessian products on the Morley space.

Jumps and averages always refer to the normal orientation stored in the
mesh, which makes assembly deterministic; the assembled forms themselves
do not depend on that orientation choice.

All matrices are assembled over the full dof set (duplicate COO entries
summed at finalize); :class:`AssembledForm` carries the restriction to
free dofs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import IO, NamedTuple

import numpy as np
import scipy.sparse as sp

from . import fe_space
from .fe_space import DofMap, ElementKind, cell_eval
from .mesh import Mesh
from .quadrature import edge_rule, triangle_rule

__all__ = [
    "assemble_mass",
    "load_vector",
    "assemble_conforming",
    "assemble_cr",
    "assemble_sipdg",
    "sipdg_parts",
    "assemble_c0ipg",
    "c0ipg_parts",
    "assemble_morley",
    "dg_norm_matrix",
    "AssembledForm",
    "build_form",
    "default_penalty",
    "dump_matrix_text",
]


def _scatter(blocks: np.ndarray, dofs: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum local blocks (m, a, a) into an n x n CSR matrix via dof lists (m, a)."""
    m, a, _ = blocks.shape
    rows = np.repeat(dofs, a, axis=1).ravel()
    cols = np.tile(dofs, (1, a)).ravel()
    mat = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n))
    return mat.tocsr()


def _volume_blocks(dofmap: DofMap, quad_degree: int, order: int):
    """Quadrature data on all triangles: weights*|det J| and basis tables."""
    rule = triangle_rule(quad_degree)
    tabs = cell_eval(dofmap, None, rule.xy, order=order)
    wdet = rule.weights[None, :] * dofmap.mesh.jacobian_dets[:, None]
    return rule, wdet, tabs


def assemble_mass(dofmap: DofMap, quad_degree: int | None = None) -> sp.csr_matrix:
    """L2 mass matrix M_ij = (phi_j, phi_i) over all dofs."""
    if quad_degree is None:
        quad_degree = 2 * dofmap.kind.degree
    _, wdet, vals = _volume_blocks(dofmap, quad_degree, order=0)
    blocks = np.einsum("mq,mqi,mqj->mij", wdet, vals, vals)
    return _scatter(blocks, dofmap.cell_dofs, dofmap.n_dofs)


def element_mass_matrices(dofmap: DofMap, quad_degree: int | None = None):
    """Per-triangle local mass matrices (nt, nl, nl); used by tests."""
    if quad_degree is None:
        quad_degree = 2 * dofmap.kind.degree
    _, wdet, vals = _volume_blocks(dofmap, quad_degree, order=0)
    return np.einsum("mq,mqi,mqj->mij", wdet, vals, vals)


def load_vector(dofmap: DofMap, f, quad_degree: int) -> np.ndarray:
    """Load vector b_i = (f, phi_i) for a callable field f(x, y)."""
    rule = triangle_rule(quad_degree)
    mesh = dofmap.mesh
    vals = cell_eval(dofmap, None, rule.xy, order=0)
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    phys = v0[:, None, :] + np.einsum("mij,qj->mqi", mesh.jacobians, rule.xy)
    fv = np.asarray(f(phys[..., 0], phys[..., 1]), dtype=float)
    wdet = rule.weights[None, :] * mesh.jacobian_dets[:, None]
    contrib = np.einsum("mq,mq,mqi->mi", wdet, fv, vals)
    b = np.zeros(dofmap.n_dofs)
    np.add.at(b, dofmap.cell_dofs, contrib)
    return b


def _grad_stiffness(dofmap: DofMap) -> sp.csr_matrix:
    quad_degree = max(1, 2 * (dofmap.kind.degree - 1))
    _, wdet, (_, grads) = _volume_blocks(dofmap, quad_degree, order=1)
    blocks = np.einsum("mq,mqia,mqja->mij", wdet, grads, grads)
    return _scatter(blocks, dofmap.cell_dofs, dofmap.n_dofs)


def assemble_conforming(dofmap: DofMap) -> sp.csr_matrix:
    """Stiffness (grad u, grad v) on a Lagrange space (pre-elimination)."""
    if dofmap.kind.family != "lagrange":
        raise ValueError("conforming assembly expects a Lagrange dofmap")
    return _grad_stiffness(dofmap)


def assemble_cr(dofmap: DofMap) -> sp.csr_matrix:
    """Elementwise stiffness sum_K (grad u, grad v)_K on the Crouzeix-Raviart space."""
    if dofmap.kind.family != "cr":
        raise ValueError("expected a Crouzeix-Raviart dofmap")
    return _grad_stiffness(dofmap)


def assemble_morley(dofmap: DofMap) -> sp.csr_matrix:
    """Elementwise Hessian form sum_K (D^2 u : D^2 v)_K on the Morley space."""
    if dofmap.kind.family != "morley":
        raise ValueError("expected a Morley dofmap")
    _, wdet, (_, _, hess) = _volume_blocks(dofmap, 2, order=2)
    blocks = np.einsum("mq,mqiab,mqjab->mij", wdet, hess, hess)
    return _scatter(blocks, dofmap.cell_dofs, dofmap.n_dofs)


# ---------------------------------------------------------------------------
# Edge traces.
# ---------------------------------------------------------------------------

class _EdgeTraces(NamedTuple):
    edges: np.ndarray      # edge indices (me,)
    tris: np.ndarray       # adjacent triangle per edge (me,)
    weights: np.ndarray    # quad weights * |e|  (me, q)
    values: np.ndarray     # basis traces (me, q, nl)
    normal_grad: np.ndarray  # n_e . grad phi (me, q, nl)
    normal_hess: np.ndarray | None  # n_e . D2 phi . n_e (me, q, nl)


def _edge_traces(dofmap: DofMap, edges, tris, rule, order=1, with_hess=False):
    """Traces of the local basis of triangle ``tris[e]`` on edge ``edges[e]``."""
    mesh = dofmap.mesh
    a = mesh.edge_vertices[edges, 0]
    b = mesh.edge_vertices[edges, 1]
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    s = rule.points
    phys = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    v0 = mesh.vertices[mesh.triangles[tris, 0]]
    ref = np.einsum("mij,mqj->mqi", mesh.jacobian_invs[tris], phys - v0[:, None, :])
    if with_hess:
        vals, grads, hess = cell_eval(dofmap, tris, ref, order=2)
    else:
        vals, grads = cell_eval(dofmap, tris, ref, order=1)
        hess = None
    n = mesh.edge_normals[edges]
    ngrad = np.einsum("mqla,ma->mql", grads, n)
    nhess = None
    if with_hess:
        nhess = np.einsum("ma,mqlab,mb->mql", n, hess, n)
    w = rule.weights[None, :] * mesh.edge_lengths[edges][:, None]
    return _EdgeTraces(edges, tris, w, vals, ngrad, nhess)


def _interior_boundary_edges(mesh: Mesh):
    interior = np.flatnonzero(~mesh.edge_is_boundary)
    boundary = np.flatnonzero(mesh.edge_is_boundary)
    return interior, boundary


# ---------------------------------------------------------------------------
# SIP-DG.
# ---------------------------------------------------------------------------

class SipdgParts(NamedTuple):
    """A(gamma) = volume - (flux_interior + flux_boundary) + gamma * (penalty_interior + penalty_boundary)."""

    volume: sp.csr_matrix
    flux_interior: sp.csr_matrix
    flux_boundary: sp.csr_matrix
    penalty_interior: sp.csr_matrix
    penalty_boundary: sp.csr_matrix


def sipdg_parts(dofmap: DofMap) -> SipdgParts:
    if dofmap.kind.family != "dg":
        raise ValueError("SIP-DG assembly expects a discontinuous dofmap")
    mesh = dofmap.mesh
    n = dofmap.n_dofs
    nl = dofmap.kind.n_local
    rule = edge_rule(2 * dofmap.kind.degree + 1)
    interior, boundary = _interior_boundary_edges(mesh)

    volume = _grad_stiffness(dofmap)

    # Interior edges: jump [[v]].n = v(K-) - v(K+) (normal from K- to K+),
    # average {{grad v}}.n = (gn(K-) + gn(K+)) / 2.
    tm = mesh.edge_tris[interior, 0]
    tp = mesh.edge_tris[interior, 1]
    trm = _edge_traces(dofmap, interior, tm, rule)
    trp = _edge_traces(dofmap, interior, tp, rule)
    w = trm.weights
    me = len(interior)
    q = len(rule.points)
    jump = np.concatenate([trm.values, -trp.values], axis=2)  # (me, q, 2nl)
    avg = 0.5 * np.concatenate([trm.normal_grad, trp.normal_grad], axis=2)
    dofs = np.concatenate(
        [dofmap.cell_dofs[tm], dofmap.cell_dofs[tp]], axis=1
    )
    cross = np.einsum("mq,mqi,mqj->mij", w, avg, jump)
    flux_i = _scatter(cross + cross.transpose(0, 2, 1), dofs, n)
    inv_len = 1.0 / mesh.edge_lengths[interior]
    pen_blocks = np.einsum("m,mq,mqi,mqj->mij", inv_len, w, jump, jump)
    pen_i = _scatter(pen_blocks, dofs, n)

    # Boundary edges: jump = v * n (outward), average = grad v.
    tb = mesh.edge_tris[boundary, 0]
    trb = _edge_traces(dofmap, boundary, tb, rule)
    wb = trb.weights
    dofs_b = dofmap.cell_dofs[tb]
    cross_b = np.einsum("mq,mqi,mqj->mij", wb, trb.normal_grad, trb.values)
    flux_b = _scatter(cross_b + cross_b.transpose(0, 2, 1), dofs_b, n)
    inv_len_b = 1.0 / mesh.edge_lengths[boundary]
    pen_blocks_b = np.einsum(
        "m,mq,mqi,mqj->mij", inv_len_b, wb, trb.values, trb.values
    )
    pen_b = _scatter(pen_blocks_b, dofs_b, n)

    return SipdgParts(volume, flux_i, flux_b, pen_i, pen_b)


def assemble_sipdg(dofmap: DofMap, gamma: float) -> sp.csr_matrix:
    """Symmetric interior penalty DG stiffness with per-edge penalty gamma/|e|."""
    if gamma <= 0:
        raise ValueError("penalty must be positive")
    p = sipdg_parts(dofmap)
    return (
        p.volume
        - p.flux_interior
        - p.flux_boundary
        + gamma * (p.penalty_interior + p.penalty_boundary)
    )


def dg_norm_matrix(dofmap: DofMap) -> sp.csr_matrix:
    """Matrix of the DG norm: ||v||_n^2 = ||grad_h v||^2 + sum_e |e|^-1 ||[[v]]||_e^2."""
    p = sipdg_parts(dofmap)
    return p.volume + p.penalty_interior + p.penalty_boundary


# ---------------------------------------------------------------------------
# C0 interior penalty for the plate problem.
# ---------------------------------------------------------------------------

class C0ipgParts(NamedTuple):
    """A(sigma) = hessian + (flux_interior + flux_boundary) + sigma * (penalty_interior + penalty_boundary)."""

    hessian: sp.csr_matrix
    flux_interior: sp.csr_matrix
    flux_boundary: sp.csr_matrix
    penalty_interior: sp.csr_matrix
    penalty_boundary: sp.csr_matrix


def c0ipg_parts(dofmap: DofMap) -> C0ipgParts:
    if dofmap.kind.family != "lagrange" or dofmap.kind.degree < 2:
        raise ValueError("C0 interior penalty needs a Lagrange space of degree >= 2")
    mesh = dofmap.mesh
    n = dofmap.n_dofs
    k = dofmap.kind.degree
    _, wdet, (_, _, hess) = _volume_blocks(dofmap, 2 * k, order=2)
    blocks = np.einsum("mq,mqiab,mqjab->mij", wdet, hess, hess)
    hess_mat = _scatter(blocks, dofmap.cell_dofs, n)

    rule = edge_rule(2 * k + 1)
    interior, boundary = _interior_boundary_edges(mesh)

    # Interior edges: flux jump [[dv/dn]] = dv+/dn - dv-/dn, average
    # {{d^2 v/dn^2}} = (h- + h+)/2, normal from K- to K+.
    tm = mesh.edge_tris[interior, 0]
    tp = mesh.edge_tris[interior, 1]
    trm = _edge_traces(dofmap, interior, tm, rule, with_hess=True)
    trp = _edge_traces(dofmap, interior, tp, rule, with_hess=True)
    w = trm.weights
    jump = np.concatenate([-trm.normal_grad, trp.normal_grad], axis=2)
    avg = 0.5 * np.concatenate([trm.normal_hess, trp.normal_hess], axis=2)
    dofs = np.concatenate([dofmap.cell_dofs[tm], dofmap.cell_dofs[tp]], axis=1)
    cross = np.einsum("mq,mqi,mqj->mij", w, avg, jump)
    flux_i = _scatter(cross + cross.transpose(0, 2, 1), dofs, n)
    inv_len = 1.0 / mesh.edge_lengths[interior]
    pen_i = _scatter(
        np.einsum("m,mq,mqi,mqj->mij", inv_len, w, jump, jump), dofs, n
    )

    # Boundary edges, one-sided: [[dv/dn]] = -dv/dn, {{d^2v/dn^2}} = d^2v/dn^2
    # with the outward normal; this clamps the slope weakly.
    tb = mesh.edge_tris[boundary, 0]
    trb = _edge_traces(dofmap, boundary, tb, rule, with_hess=True)
    wb = trb.weights
    dofs_b = dofmap.cell_dofs[tb]
    jump_b = -trb.normal_grad
    cross_b = np.einsum("mq,mqi,mqj->mij", wb, trb.normal_hess, jump_b)
    flux_b = _scatter(cross_b + cross_b.transpose(0, 2, 1), dofs_b, n)
    inv_len_b = 1.0 / mesh.edge_lengths[boundary]
    pen_b = _scatter(
        np.einsum("m,mq,mqi,mqj->mij", inv_len_b, wb, jump_b, jump_b), dofs_b, n
    )

    return C0ipgParts(hess_mat, flux_i, flux_b, pen_i, pen_b)


def assemble_c0ipg(dofmap: DofMap, sigma: float) -> sp.csr_matrix:
    """C0 interior penalty plate stiffness with per-edge penalty sigma/|e|."""
    if sigma <= 0:
        raise ValueError("penalty must be positive")
    p = c0ipg_parts(dofmap)
    return (
        p.hessian
        + p.flux_interior
        + p.flux_boundary
        + sigma * (p.penalty_interior + p.penalty_boundary)
    )


# ---------------------------------------------------------------------------
# Bundled form.
# ---------------------------------------------------------------------------

_METHOD_KINDS = {
    "conforming": lambda degree: fe_space.lagrange_p(degree),
    "sipdg": lambda degree: fe_space.discontinuous_p(degree),
    "cr": lambda degree: fe_space.crouzeix_raviart(),
    "c0ipg": lambda degree: fe_space.lagrange_p(degree),
    "morley": lambda degree: fe_space.morley(),
}

_DEFAULT_DEGREE = {"conforming": 1, "sipdg": 1, "cr": 1, "c0ipg": 2, "morley": 2}


def default_penalty(method: str, degree: int) -> float | None:
    """Safe default stabilization weights (the forms only need "large enough")."""
    if method == "sipdg":
        return 10.0 * degree**2
    if method == "c0ipg":
        return 5.0 * degree**2
    return None


@dataclass(eq=False)
class AssembledForm:
    """Stiffness/mass pair of one method on one mesh, plus the dof map."""

    A: sp.csr_matrix
    M: sp.csr_matrix
    dofmap: DofMap
    method: str
    penalty: float | None = None

    @property
    def kind(self) -> ElementKind:
        return self.dofmap.kind

    @property
    def level(self) -> int:
        return self.dofmap.mesh.level

    @property
    def h(self) -> float:
        return self.dofmap.mesh.h

    @cached_property
    def A_free(self) -> sp.csr_matrix:
        free = self.dofmap.free
        return self.A[free][:, free]

    @cached_property
    def M_free(self) -> sp.csr_matrix:
        free = self.dofmap.free
        return self.M[free][:, free]

    def symmetry_defect(self) -> float:
        """max |A - A^T| / max |A|, and the same for M (worst of the two)."""
        out = 0.0
        for mat in (self.A, self.M):
            d = abs(mat - mat.T).max()
            m = abs(mat).max()
            out = max(out, d / m if m else 0.0)
        return float(out)

    def validate(self, check_spd: bool = True, dense_limit: int = 4000):
        """Assert symmetry of A and M and (optionally) their definiteness."""
        defect = self.symmetry_defect()
        if defect > 1e-12:
            raise AssertionError(f"assembled matrices asymmetric ({defect:.2e})")
        if check_spd:
            for name, mat in (("M", self.M_free), ("A", self.A_free)):
                _assert_spd(name, mat, dense_limit)


def _assert_spd(name, mat, dense_limit):
    import scipy.linalg as la
    import scipy.sparse.linalg as spla

    n = mat.shape[0]
    if n == 0:
        return
    if n <= dense_limit:
        try:
            la.cholesky(mat.toarray())
        except la.LinAlgError as exc:
            raise AssertionError(f"{name} is not positive definite") from exc
    else:
        lam = spla.eigsh(mat, k=1, sigma=0, which="LM", return_eigenvectors=False)
        if lam[0] <= 0:
            raise AssertionError(f"{name} is not positive definite")


def build_form(
    mesh: Mesh,
    method: str,
    degree: int | None = None,
    penalty: float | None = None,
) -> AssembledForm:
    """Assemble stiffness and mass of one method on one mesh."""
    if method not in _METHOD_KINDS:
        raise ValueError(f"unknown method {method!r}")
    if degree is None:
        degree = _DEFAULT_DEGREE[method]
    kind = _METHOD_KINDS[method](degree)
    dofmap = fe_space.build_dofmap(mesh, kind)
    if penalty is None:
        penalty = default_penalty(method, degree)
    if method == "conforming":
        A = assemble_conforming(dofmap)
    elif method == "cr":
        A = assemble_cr(dofmap)
    elif method == "sipdg":
        A = assemble_sipdg(dofmap, penalty)
    elif method == "c0ipg":
        A = assemble_c0ipg(dofmap, penalty)
    else:
        A = assemble_morley(dofmap)
    return AssembledForm(A, dofmap.mass_matrix, dofmap, method, penalty)


def dump_matrix_text(mat: sp.spmatrix, stream: IO[str]):
    """Coordinate-format dump: one "row col value" line per stored entry."""
    coo = mat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        stream.write(f"{r} {c} {v:.17g}\n")
