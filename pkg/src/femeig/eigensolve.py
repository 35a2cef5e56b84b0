"""Generalized eigensolver and its contour-integral cross check.

The direct path solves A x = lambda M x (A, M restricted to free dofs)
by dense reduction at desk scale and ARPACK shift-invert above that.

The independent path locates the same eigenvalues as singular points of
the holomorphic matrix function

    F(eta) = T - eta^{-1} I,        T = A^{-1} M,

via contour moments (trapezoid rule on a circle, which converges
exponentially for the holomorphic integrand).  Applying F(eta)^{-1}
never forms T: from (T - eta^{-1} I) x = y it follows that
(M - eta^{-1} A) x = A y, i.e. one linear solve with the shifted pencil
and one multiplication by A.  ``resolvent_apply`` implements exactly
this reduction; the test suite validates it against a directly inverted
F(eta) on small systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fe_space
from .assembly import AssembledForm, load_vector

__all__ = [
    "EigSolution",
    "OperatorFunction",
    "solve_pencil",
    "solve_gevp",
    "resolvent_apply",
    "contour_solve",
    "pointwise_residual",
]

DENSE_CUTOFF = 3000


@dataclass(eq=False)
class EigSolution:
    """Ascending eigenvalues with M-orthonormal coefficient vectors."""

    eigenvalues: np.ndarray  # (k,)
    eigenvectors: np.ndarray  # (n, k)
    residuals: np.ndarray  # (k,) relative residuals |Ax - lambda Mx| / |Ax|
    method: str  # "direct" | "contour"

    def __len__(self):
        return len(self.eigenvalues)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude coefficient of each vector positive."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _residuals(A, M, values, vectors) -> np.ndarray:
    res = np.empty(len(values))
    for i, lam in enumerate(values):
        av = A @ vectors[:, i]
        r = av - lam * (M @ vectors[:, i])
        denom = np.linalg.norm(av)
        res[i] = np.linalg.norm(r) / denom if denom else np.linalg.norm(r)
    return res


def solve_pencil(
    A: sp.spmatrix,
    M: sp.spmatrix,
    count: int,
    dense_cutoff: int = DENSE_CUTOFF,
    method_tag: str = "direct",
) -> EigSolution:
    """Smallest ``count`` eigenpairs of the symmetric pencil (A, M), M SPD."""
    n = A.shape[0]
    if not 1 <= count <= n:
        raise ValueError(f"count must lie in 1..{n}")
    if n <= dense_cutoff:
        values, vectors = la.eigh(np.asarray(A.todense()), np.asarray(M.todense()))
        values = values[:count]
        vectors = vectors[:, :count]
    else:
        # Shift-invert about zero targets the smallest eigenvalues of the
        # positive definite pencil; the fixed start vector keeps runs
        # reproducible.
        v0 = np.full(n, 1.0 / np.sqrt(n))
        values, vectors = spla.eigsh(
            A.tocsc(), k=count, M=M.tocsc(), sigma=0.0, which="LM", v0=v0
        )
        order = np.argsort(values)
        values = values[order]
        vectors = vectors[:, order]
    vectors = _fix_signs(vectors)
    return EigSolution(values, vectors, _residuals(A, M, values, vectors), method_tag)


def solve_gevp(form: AssembledForm, count: int, **kwargs) -> EigSolution:
    """Smallest ``count`` eigenpairs of the assembled form on its free dofs."""
    return solve_pencil(form.A_free, form.M_free, count, **kwargs)


@dataclass(frozen=True, eq=False)
class OperatorFunction:
    """Discrete holomorphic function F(eta) = A^{-1} M - eta^{-1} I on a disk.

    The disk Omega = {|eta - center| <= radius} must exclude the origin,
    where F has its pole.
    """

    A: sp.spmatrix
    M: sp.spmatrix
    center: complex
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if abs(self.center) <= self.radius:
            raise ValueError("domain disk must not contain 0")


def resolvent_apply(A: sp.spmatrix, M: sp.spmatrix, eta: complex, rhs: np.ndarray):
    """Apply F(eta)^{-1} = (M - eta^{-1} A)^{-1} A to the columns of ``rhs``."""
    shifted = (M - A / eta).tocsc().astype(complex)
    lu = spla.splu(shifted)
    return lu.solve(np.asarray(A @ rhs, dtype=complex))


def contour_solve(
    opfun: OperatorFunction,
    center: complex,
    radius: float,
    n_quad: int = 32,
    probe_rank: int = 8,
    seed: int = 0,
    rank_tol: float = 1e-10,
) -> EigSolution:
    """All pencil eigenvalues strictly inside the circle, from contour moments.

    probe_rank must exceed the number of enclosed eigenvalues (counted with
    multiplicity); a safety margin of 2 is recommended.  Raises if the
    probe subspace saturates, which signals that probe_rank was too small.
    """
    if abs(complex(center) - complex(opfun.center)) + radius > opfun.radius + 1e-12:
        raise ValueError("integration circle must lie inside the function's domain")
    if n_quad < 16:
        raise ValueError("n_quad must be at least 16")
    A = opfun.A.tocsc()
    M = opfun.M.tocsc()
    n = A.shape[0]
    probe_rank = min(probe_rank, n)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, probe_rank))

    theta = 2.0 * np.pi * np.arange(n_quad) / n_quad
    nodes = center + radius * np.exp(1j * theta)
    mom0 = np.zeros((n, probe_rank), dtype=complex)
    mom1 = np.zeros((n, probe_rank), dtype=complex)
    scale = 0.0
    for z in nodes:
        Y = resolvent_apply(A, M, z, V)
        w = radius * np.exp(1j * np.angle(z - center)) / n_quad
        mom0 += w * Y
        mom1 += w * z * Y
        scale = max(scale, np.linalg.norm(Y) / np.sqrt(probe_rank))

    U, svals, Wh = la.svd(mom0, full_matrices=False)
    if svals.size == 0 or svals[0] < 1e-8 * max(scale, 1e-300):
        return _empty_solution(n)
    keep = svals > rank_tol * svals[0]
    rank = int(np.count_nonzero(keep))
    if rank == probe_rank:
        raise ValueError(
            "probe subspace saturated; increase probe_rank above the expected "
            "eigenvalue count inside the contour"
        )
    U = U[:, keep]
    Wh = Wh[keep]
    B = U.conj().T @ mom1 @ Wh.conj().T / svals[keep]
    theta_vals, theta_vecs = la.eig(B)

    inside = np.abs(theta_vals - center) < radius * (1.0 - 1e-9)
    if not inside.any():
        return _empty_solution(n)
    values = theta_vals[inside]
    vectors = (U @ theta_vecs)[:, inside]

    # The pencil is real symmetric: strip the spurious imaginary parts and
    # rotate each vector onto the real axis before normalizing.
    values = values.real
    real_vectors = np.empty((n, vectors.shape[1]))
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        phase = col[np.argmax(np.abs(col))]
        col = (col * np.conj(phase / abs(phase))).real
        mnorm = np.sqrt(col @ (M @ col))
        real_vectors[:, j] = col / mnorm
    order = np.argsort(values)
    values = values[order]
    real_vectors = _fix_signs(real_vectors[:, order])
    residuals = _residuals(A, M, values, real_vectors)
    good = residuals <= 1e-6
    return EigSolution(
        values[good], real_vectors[:, good], residuals[good], "contour"
    )


def _empty_solution(n: int) -> EigSolution:
    return EigSolution(
        np.empty(0), np.empty((n, 0)), np.empty(0), "contour"
    )


def pointwise_residual(
    form_coarse: AssembledForm, form_fine: AssembledForm, f
) -> float:
    """L2 gap between the coarse source solve and the projected fine solve.

    Solves the source problem with data f on both levels and returns the
    coarse-space L2 norm of (coarse solution) - (coarse projection of the
    fine solution); the fine solve stands in for the unknown exact
    solution operator.
    """
    cdm, fdm = form_coarse.dofmap, form_fine.dofmap
    if cdm.kind != fdm.kind or form_coarse.method != form_fine.method:
        raise ValueError("both forms must discretize the same operator")
    if fdm.mesh.level < cdm.mesh.level:
        raise ValueError("fine level must be at least the coarse level")

    def solve_source(form):
        b = load_vector(form.dofmap, f, fe_space.ANALYTIC_QUAD_DEGREE)
        return spla.spsolve(form.A_free.tocsc(), b[form.dofmap.free])

    u_coarse = solve_source(form_coarse)
    u_fine = solve_source(form_fine)
    projected = fe_space.project_fine_to_coarse(
        fdm, fdm.full_coeffs(u_fine), cdm
    )
    diff = u_coarse - projected.coeffs
    return float(np.sqrt(diff @ (form_coarse.M_free @ diff)))
