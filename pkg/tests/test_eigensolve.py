import numpy as np
import pytest
import scipy.linalg as la

from conftest import sin_mode
from femeig import assembly as asm
from femeig import eigensolve as es
from femeig.mesh import UNIT_SQUARE, build_mesh


def square_form(level, method="conforming", **kw):
    return asm.build_form(build_mesh(UNIT_SQUARE, level), method, **kw)


def test_scalar_system_eigenvalue_is_ratio():
    form = square_form(1, degree=1)
    assert form.dofmap.n_free == 1
    a = form.A_free.toarray()[0, 0]
    m = form.M_free.toarray()[0, 0]
    sol = es.solve_gevp(form, 1)
    assert sol.eigenvalues[0] == pytest.approx(a / m, rel=1e-14)


def test_level5_lambda1_within_one_percent():
    sol = es.solve_gevp(square_form(5), 1)
    exact = 2.0 * np.pi**2
    assert abs(sol.eigenvalues[0] - exact) / exact < 0.01


def test_first_four_eigenvalues_match_analytic_structure():
    sol = es.solve_gevp(square_form(5), 4)
    exact = np.pi**2 * np.array([2.0, 5.0, 5.0, 8.0])
    rel = np.abs(sol.eigenvalues - exact) / exact
    assert rel.max() < 0.01
    # the middle pair approximates a double eigenvalue: its internal split
    # stays within the discretization error of the pair
    pair_gap = abs(sol.eigenvalues[2] - sol.eigenvalues[1])
    pair_err = np.abs(sol.eigenvalues[1:3] - 5 * np.pi**2).max()
    assert pair_gap <= pair_err


def test_m_orthonormality_and_residuals():
    form = square_form(3)
    sol = es.solve_gevp(form, 4)
    M = form.M_free
    G = sol.eigenvectors.T @ (M @ sol.eigenvectors)
    assert np.max(np.abs(G - np.eye(4))) < 1e-10
    assert (sol.residuals <= 1e-9).all()
    assert (np.diff(sol.eigenvalues) >= 0).all()
    assert (sol.eigenvalues > 0).all()


def test_sparse_path_matches_dense():
    form = square_form(4)
    dense = es.solve_gevp(form, 3)
    sparse = es.solve_gevp(form, 3, dense_cutoff=10)
    assert np.allclose(dense.eigenvalues, sparse.eigenvalues, rtol=1e-9)
    assert (sparse.residuals <= 1e-9).all()


def test_shift_invariance():
    form = square_form(3)
    base = es.solve_gevp(form, 3)
    shifted = es.solve_pencil(form.A_free + 4.25 * form.M_free, form.M_free, 3)
    assert np.max(np.abs(shifted.eigenvalues - base.eigenvalues - 4.25)) < 1e-10
    for j in range(3):
        x, y = base.eigenvectors[:, j], shifted.eigenvectors[:, j]
        assert min(np.abs(x - y).max(), np.abs(x + y).max()) < 1e-8


def test_count_out_of_range():
    form = square_form(2)
    with pytest.raises(ValueError):
        es.solve_gevp(form, form.dofmap.n_free + 1)


def test_eigenvector_sign_convention():
    sol = es.solve_gevp(square_form(3), 3)
    for j in range(3):
        v = sol.eigenvectors[:, j]
        assert v[np.argmax(np.abs(v))] > 0


# ---------------------------------------------------------------------------
# operator function & contour solver
# ---------------------------------------------------------------------------

def test_operator_function_domain_must_exclude_zero():
    form = square_form(2)
    with pytest.raises(ValueError):
        es.OperatorFunction(form.A_free, form.M_free, center=5.0, radius=10.0)


def test_resolvent_matches_direct_inverse_on_small_system():
    # level-2 square: 9 free dofs, small enough to invert F(eta) densely
    form = square_form(2)
    A = form.A_free.toarray()
    M = form.M_free.toarray()
    n = A.shape[0]
    assert n <= 50
    rng = np.random.default_rng(3)
    Y = rng.standard_normal((n, 3))
    for eta in (25.0 + 0j, 60.0 + 5.0j, -10.0 + 1.0j):
        F = la.inv(A) @ M - np.eye(n) / eta
        expected = la.solve(F, Y.astype(complex))
        got = es.resolvent_apply(form.A_free, form.M_free, eta, Y)
        assert np.max(np.abs(got - expected)) < 1e-10 * np.max(np.abs(expected))


def test_contour_reproduces_simple_eigenvalue():
    form = square_form(4)
    direct = es.solve_gevp(form, 4)
    lam1 = direct.eigenvalues[0]
    op = es.OperatorFunction(form.A_free, form.M_free, center=50.0, radius=45.0)
    found = es.contour_solve(op, center=lam1 + 1.0, radius=9.0, probe_rank=4)
    assert len(found) == 1
    assert abs(found.eigenvalues[0] - lam1) <= 1e-8 * lam1
    x = found.eigenvectors[:, 0]
    y = direct.eigenvectors[:, 0]
    assert min(np.abs(x - y).max(), np.abs(x + y).max()) < 1e-6


def test_contour_reproduces_double_cluster():
    form = square_form(4)
    direct = es.solve_gevp(form, 4)
    pair = direct.eigenvalues[1:3]
    op = es.OperatorFunction(form.A_free, form.M_free, center=50.0, radius=45.0)
    found = es.contour_solve(op, center=pair.mean(), radius=4.0, probe_rank=5)
    assert len(found) == 2
    assert np.max(np.abs(found.eigenvalues - pair)) <= 1e-8 * pair.mean()


def test_contour_empty_region():
    form = square_form(4)
    op = es.OperatorFunction(form.A_free, form.M_free, center=50.0, radius=45.0)
    found = es.contour_solve(op, center=35.0, radius=5.0, probe_rank=4)
    assert len(found) == 0


def test_contour_rejects_circle_outside_domain():
    form = square_form(3)
    op = es.OperatorFunction(form.A_free, form.M_free, center=20.0, radius=10.0)
    with pytest.raises(ValueError):
        es.contour_solve(op, center=40.0, radius=5.0)


def test_contour_saturation_error():
    form = square_form(4)
    op = es.OperatorFunction(form.A_free, form.M_free, center=50.0, radius=45.0)
    # probe_rank 2 cannot certify the 2-dimensional cluster plus margin
    with pytest.raises(ValueError):
        es.contour_solve(op, center=50.4, radius=4.0, probe_rank=2)


def test_contour_requires_enough_quadrature():
    form = square_form(3)
    op = es.OperatorFunction(form.A_free, form.M_free, center=20.0, radius=10.0)
    with pytest.raises(ValueError):
        es.contour_solve(op, center=20.0, radius=5.0, n_quad=8)


# ---------------------------------------------------------------------------
# pointwise residual
# ---------------------------------------------------------------------------

def test_pointwise_residual_rate_two():
    f = sin_mode(1, 1)
    forms = {lvl: square_form(lvl) for lvl in (2, 3, 4, 6)}
    res = [es.pointwise_residual(forms[c], forms[6], f) for c in (2, 3, 4)]
    ratios = [res[i] / res[i + 1] for i in range(2)]
    for r in ratios:
        assert 3.0 < r < 5.0  # about 4x per level


def test_pointwise_residual_zero_data():
    forms = {lvl: square_form(lvl) for lvl in (2, 4)}
    assert es.pointwise_residual(forms[2], forms[4], lambda x, y: 0.0 * x) == 0.0


def test_pointwise_residual_same_level():
    form = square_form(3)
    r = es.pointwise_residual(form, form, sin_mode(1, 1))
    assert r <= 1e-10


def test_pointwise_residual_rejects_mixed_methods():
    f1 = square_form(2)
    f2 = asm.build_form(build_mesh(UNIT_SQUARE, 4), "cr")
    with pytest.raises(ValueError):
        es.pointwise_residual(f1, f2, sin_mode(1, 1))


def test_pointwise_residual_rejects_coarser_fine():
    f1 = square_form(3)
    f2 = square_form(2)
    with pytest.raises(ValueError):
        es.pointwise_residual(f1, f2, sin_mode(1, 1))
