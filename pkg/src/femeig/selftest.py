"""Fast property suites runnable without pytest (CLI ``selftest``)."""

from __future__ import annotations

import math
import traceback

import numpy as np

from . import assembly, eigensolve, fe_space, quadrature
from .mesh import L_SHAPE, UNIT_SQUARE, build_mesh, refine_uniform

__all__ = ["run_selftest"]


def _check_meshes():
    for domain, coarse_tris in ((UNIT_SQUARE, 2), (L_SHAPE, 6)):
        for level in range(3):
            mesh = build_mesh(domain, level)
            assert mesh.n_triangles == coarse_tris * 4**level
            assert abs(mesh.tri_areas.sum() - domain.area) < 1e-12 * domain.area
            assert mesh.n_vertices - mesh.n_edges + mesh.n_triangles == 1
        fine = refine_uniform(build_mesh(domain, 1))
        assert abs(fine.h - build_mesh(domain, 1).h / 2) < 1e-14


def _check_quadrature():
    for degree in range(1, quadrature.MAX_DEGREE + 1):
        rule = quadrature.triangle_rule(degree)
        assert abs(rule.weights.sum() - 0.5) < 1e-14
        assert (rule.weights > 0).all()
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                exact = (
                    math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
                )
                got = float(
                    np.sum(rule.weights * rule.xy[:, 0] ** a * rule.xy[:, 1] ** b)
                )
                assert abs(got - exact) <= 1e-13 * max(1.0, abs(exact))
        erule = quadrature.edge_rule(degree)
        assert abs(erule.weights.sum() - 1.0) < 1e-14
        for a in range(degree + 1):
            got = float(np.sum(erule.weights * erule.points**a))
            assert abs(got - 1.0 / (a + 1)) <= 1e-13


def _check_bases():
    pts = np.array([[0.25, 0.25], [0.1, 0.6], [1 / 3, 1 / 3]])
    for kind in (
        fe_space.lagrange_p(1),
        fe_space.lagrange_p(2),
        fe_space.lagrange_p(3),
        fe_space.crouzeix_raviart(),
    ):
        vals = fe_space.basis_eval(kind, pts).values
        assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-12)
    mids = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])
    cr = fe_space.basis_eval(fe_space.crouzeix_raviart(), mids).values
    assert np.allclose(cr, np.eye(3), atol=1e-12)


def _check_projection():
    mesh = build_mesh(UNIT_SQUARE, 2)
    for kind in (fe_space.discontinuous_p(1), fe_space.crouzeix_raviart()):
        dm = fe_space.build_dofmap(mesh, kind)
        f = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
        p = fe_space.l2_project(dm, f)
        again = fe_space.l2_project(dm, lambda x, y: p(np.column_stack([x.ravel(), y.ravel()])).reshape(x.shape))
        assert np.max(np.abs(again.coeffs - p.coeffs)) < 1e-10


def _check_forms():
    mesh = build_mesh(UNIT_SQUARE, 2)
    for method in ("conforming", "sipdg", "cr", "c0ipg", "morley"):
        form = assembly.build_form(mesh, method)
        form.validate(check_spd=True)


def _check_eigensolve():
    mesh = build_mesh(UNIT_SQUARE, 2)
    form = assembly.build_form(mesh, "conforming", degree=1)
    sol = eigensolve.solve_gevp(form, 3)
    assert (np.diff(sol.eigenvalues) >= -1e-12).all()
    assert (sol.residuals <= 1e-9).all()
    shifted = eigensolve.solve_pencil(
        form.A_free + 2.5 * form.M_free, form.M_free, 3
    )
    assert np.allclose(shifted.eigenvalues, sol.eigenvalues + 2.5, atol=1e-10)


def _check_contour():
    mesh = build_mesh(UNIT_SQUARE, 3)
    form = assembly.build_form(mesh, "conforming", degree=1)
    direct = eigensolve.solve_gevp(form, 2)
    lam1 = direct.eigenvalues[0]
    opfun = eigensolve.OperatorFunction(
        form.A_free, form.M_free, center=lam1, radius=0.45 * lam1
    )
    found = eigensolve.contour_solve(
        opfun, center=lam1, radius=0.4 * lam1, n_quad=24, probe_rank=4
    )
    assert len(found) == 1
    assert abs(found.eigenvalues[0] - lam1) <= 1e-8 * lam1


_CHECKS = [
    ("mesh invariants", _check_meshes),
    ("quadrature exactness", _check_quadrature),
    ("basis properties", _check_bases),
    ("projection idempotence", _check_projection),
    ("assembled form symmetry/SPD", _check_forms),
    ("generalized eigensolver", _check_eigensolve),
    ("contour cross-check", _check_contour),
]


def run_selftest() -> int:
    failures = 0
    for name, check in _CHECKS:
        try:
            check()
        except Exception:
            failures += 1
            print(f"FAIL {name}")
            traceback.print_exc()
        else:
            print(f"ok   {name}")
    if failures:
        print(f"{failures} of {len(_CHECKS)} suites failed")
        return 1
    print(f"all {len(_CHECKS)} suites passed")
    return 0
