"""Finite element eigenvalue studies on polygonal domains.

Five discretizations of two model eigenvalue problems (second order
Dirichlet, fourth order clamped plate), a direct generalized
eigensolver with a contour-integral cross check, and a convergence-rate
harness with CSV/JSON/figure reports.
"""

from .mesh import (
    L_SHAPE,
    UNIT_SQUARE,
    Mesh,
    PolygonalDomain,
    build_mesh,
    edge_adjacency,
    refine_uniform,
)
from .quadrature import QuadratureRule, edge_rule, triangle_rule
from .fe_space import (
    DofMap,
    ElementKind,
    FeFunction,
    basis_eval,
    build_dofmap,
    crouzeix_raviart,
    discontinuous_p,
    l2_project,
    lagrange_p,
    morley,
    project_fine_to_coarse,
)
from .assembly import (
    AssembledForm,
    assemble_c0ipg,
    assemble_conforming,
    assemble_cr,
    assemble_mass,
    assemble_morley,
    assemble_sipdg,
    build_form,
    default_penalty,
)
from .eigensolve import (
    EigSolution,
    OperatorFunction,
    contour_solve,
    pointwise_residual,
    solve_gevp,
    solve_pencil,
)
from .harness import (
    ConvergenceReport,
    StudyConfig,
    eigenfunction_error,
    fit_rate,
    guaranteed_rate,
    match_eigenvalues,
    reference_eigenpairs,
    run_study,
)

__version__ = "0.1.0"
