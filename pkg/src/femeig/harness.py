"""Mesh-sequence convergence studies with verdicts against guaranteed rates.

A study fixes (domain, problem, method) and sweeps mesh levels.  Per
level it solves the discrete eigenproblem, pairs the discrete spectrum
with a reference spectrum (respecting multiplicities: a reference value
of multiplicity m consumes m discrete eigenvalues), and records
eigenvalue errors and eigenfunction L2 errors measured against the
projected reference eigenspace.  Rates are least-squares slopes in
log-log over the last three levels; a study passes when the fitted
eigenvalue rate reaches the guaranteed rate minus 0.15, a tolerance that
absorbs log-fit noise at desk scale while still separating rate 1 from
4/3 from 2.

References are either analytic (unit-square Dirichlet separation of
variables) or a fine-mesh solve whose eigenvalues are Richardson
(Aitken) extrapolated over the three finest levels, so that the
reference error stays well below the coarsest study error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .assembly import AssembledForm, build_form, default_penalty
from .eigensolve import EigSolution, solve_gevp
from .fe_space import DofMap, l2_project, project_fine_to_coarse
from .mesh import DOMAINS, build_mesh

__all__ = [
    "MAX_STUDY_LEVEL",
    "RATE_MULTIPLIER",
    "RATE_TOLERANCE",
    "StudyConfig",
    "EigenTrack",
    "ConvergenceReport",
    "ReferenceSpectrum",
    "reference_eigenpairs",
    "match_eigenvalues",
    "eigenfunction_error",
    "fit_rate",
    "run_study",
    "clear_cache",
    "guaranteed_rate",
]

MAX_STUDY_LEVEL = 8
RATE_TOLERANCE = 0.15

METHOD_PROBLEM = {
    "conforming": "dirichlet",
    "sipdg": "dirichlet",
    "cr": "dirichlet",
    "c0ipg": "biharmonic",
    "morley": "biharmonic",
}

#: guaranteed eigenvalue rate = multiplier * elliptic regularity index
RATE_MULTIPLIER = {
    "conforming": 2.0,
    "sipdg": 1.0,
    "cr": 2.0,
    "c0ipg": 2.0,
    "morley": 1.0,
}

_DEFAULT_DEGREE = {"conforming": 1, "sipdg": 1, "cr": 1, "c0ipg": 2, "morley": 2}

#: method used to compute fine-mesh reference spectra per problem
REFERENCE_METHOD = {
    "dirichlet": ("conforming", 1, None),
    "biharmonic": ("c0ipg", 2, 20.0),
}


@dataclass(frozen=True)
class StudyConfig:
    """Validated description of one convergence study."""

    domain: str
    problem: str
    method: str
    degree: int
    penalty: float | None
    levels: tuple[int, ...]
    n_eigs: int
    reference: str  # "analytic" | "fine:<level>"

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.method not in METHOD_PROBLEM:
            raise ValueError(f"unknown method {self.method!r}")
        if METHOD_PROBLEM[self.method] != self.problem:
            raise ValueError(
                f"method {self.method!r} solves the {METHOD_PROBLEM[self.method]} "
                f"problem, not {self.problem!r}"
            )
        if self.problem == "biharmonic" and self.domain == "l_shape":
            raise ValueError(
                "biharmonic studies on the L-shape are not supported: no "
                "trusted reference value or regularity index is available"
            )
        if self.penalty is not None and self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if self.method in ("sipdg", "c0ipg") and self.penalty is None:
            raise ValueError(f"method {self.method!r} requires a penalty")
        levels = self.levels
        if len(levels) < 3:
            raise ValueError("a study needs at least 3 levels to fit a rate")
        if list(levels) != list(range(levels[0], levels[-1] + 1)):
            raise ValueError("levels must be consecutive and ascending")
        if levels[0] < 0 or levels[-1] > MAX_STUDY_LEVEL:
            raise ValueError(f"levels must lie in 0..{MAX_STUDY_LEVEL}")
        if self.n_eigs < 1:
            raise ValueError("n_eigs must be positive")
        kind, ref_level = self.reference_kind, self.reference_level
        if kind == "analytic":
            if self.domain != "unit_square" or self.problem != "dirichlet":
                raise ValueError(
                    "analytic reference exists only for the unit-square "
                    "Dirichlet problem"
                )
        else:
            if ref_level < max(2, levels[-1]):
                raise ValueError(
                    "fine-mesh reference level must be >= 2 and >= the finest "
                    "study level"
                )

    @property
    def reference_kind(self) -> str:
        return "analytic" if self.reference == "analytic" else "fine"

    @property
    def reference_level(self) -> int:
        if self.reference == "analytic":
            return -1
        tag, _, lvl = self.reference.partition(":")
        if tag != "fine" or not lvl.isdigit():
            raise ValueError(f"reference must be 'analytic' or 'fine:<level>', got {self.reference!r}")
        return int(lvl)


def guaranteed_rate(config: StudyConfig) -> float:
    alpha = (
        DOMAINS[config.domain].elliptic_regularity_alpha
        if config.problem == "dirichlet"
        else 1.0  # clamped plate on the (convex) unit square
    )
    return RATE_MULTIPLIER[config.method] * alpha


# ---------------------------------------------------------------------------
# Cached per-level solutions (pure; keyed by everything that matters).
# ---------------------------------------------------------------------------

_CACHE: dict = {}


def clear_cache():
    _CACHE.clear()


def level_solution(
    domain: str, method: str, degree: int, penalty: float | None,
    level: int, count: int,
) -> tuple[AssembledForm, EigSolution]:
    key = (domain, method, degree, penalty, level, count)
    if key not in _CACHE:
        mesh = build_mesh(DOMAINS[domain], level)
        form = build_form(mesh, method, degree, penalty)
        _CACHE[key] = (form, solve_gevp(form, count))
    return _CACHE[key]


# ---------------------------------------------------------------------------
# Reference spectra.
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ReferenceSpectrum:
    """Reference eigenvalues grouped into multiplicity clusters."""

    mode: str  # "analytic" | "fine"
    values: list[float]  # one per cluster, ascending
    multiplicities: list[int]
    functions: list[list[Callable]] | None = None  # analytic eigenfunctions
    fine_dofmap: DofMap | None = None
    fine_vectors: list[np.ndarray] | None = None  # per cluster (n_free, m)

    def total(self) -> int:
        return sum(self.multiplicities)


def _square_mode(m, n, x, y):
    return 2.0 * np.sin(m * np.pi * x) * np.sin(n * np.pi * y)


def _analytic_square_dirichlet(n_eigs: int) -> ReferenceSpectrum:
    pairs = [(m, n) for m in range(1, 9) for n in range(1, 9)]
    pairs.sort(key=lambda p: (p[0] ** 2 + p[1] ** 2, p))
    values, mults, funcs = [], [], []
    for m, n in pairs:
        lam = np.pi**2 * (m**2 + n**2)
        if values and abs(lam - values[-1]) < 1e-12:
            mults[-1] += 1
            funcs[-1].append(partial(_square_mode, m, n))
        else:
            values.append(lam)
            mults.append(1)
            funcs.append([partial(_square_mode, m, n)])
        if sum(mults) >= n_eigs + 4:
            break
    if sum(mults) < n_eigs:
        raise ValueError("analytic reference table too small for n_eigs")
    return ReferenceSpectrum("analytic", values, mults, functions=funcs)


def _aitken(x0: float, x1: float, x2: float) -> float:
    denom = x2 - 2.0 * x1 + x0
    if abs(denom) < 1e-14 * max(1.0, abs(x2)):
        return x2
    return x2 - (x2 - x1) ** 2 / denom


def reference_eigenpairs(config: StudyConfig) -> ReferenceSpectrum:
    """Analytic or fine-mesh (Richardson-extrapolated) reference spectrum."""
    if config.reference_kind == "analytic":
        return _analytic_square_dirichlet(config.n_eigs)

    ref_method, ref_degree, ref_penalty = REFERENCE_METHOD[config.problem]
    L = config.reference_level
    count = config.n_eigs
    sols = [
        level_solution(config.domain, ref_method, ref_degree, ref_penalty, lvl, count)[1]
        for lvl in (L - 2, L - 1, L)
    ]
    extrapolated = np.array(
        [
            _aitken(
                sols[0].eigenvalues[i], sols[1].eigenvalues[i], sols[2].eigenvalues[i]
            )
            for i in range(count)
        ]
    )
    fine = sols[2]
    form_fine = level_solution(
        config.domain, ref_method, ref_degree, ref_penalty, L, count
    )[0]

    values, mults, vec_groups = [], [], []
    for i, lam in enumerate(extrapolated):
        if values and abs(lam - values[-1]) < 1e-3 * abs(values[-1]):
            mults[-1] += 1
            vec_groups[-1].append(fine.eigenvectors[:, i])
        else:
            values.append(float(lam))
            mults.append(1)
            vec_groups.append([fine.eigenvectors[:, i]])
    return ReferenceSpectrum(
        "fine",
        values,
        mults,
        fine_dofmap=form_fine.dofmap,
        fine_vectors=[np.column_stack(g) for g in vec_groups],
    )


# ---------------------------------------------------------------------------
# Pairing, errors, rates.
# ---------------------------------------------------------------------------

def match_eigenvalues(discrete, reference_values, multiplicities) -> list[list[int]]:
    """Order-preserving pairing: cluster j consumes its multiplicity in turn.

    Returns, per reference cluster, the list of discrete indices assigned
    to it (the trailing cluster may receive fewer than its multiplicity if
    the discrete list ends first).
    """
    discrete = np.asarray(discrete)
    if len(reference_values) != len(multiplicities):
        raise ValueError("reference values and multiplicities differ in length")
    total = int(sum(multiplicities))
    if len(discrete) > total:
        raise ValueError(
            f"{len(discrete)} discrete eigenvalues exceed the {total} reference "
            "eigenvalues (counted with multiplicity)"
        )
    pairing: list[list[int]] = []
    pos = 0
    for mult in multiplicities:
        if pos >= len(discrete):
            break
        take = min(mult, len(discrete) - pos)
        pairing.append(list(range(pos, pos + take)))
        pos += take
    return pairing


def eigenfunction_error(M, discrete, reference) -> float:
    """L2 distance of discrete eigenvector(s) to the projected reference space.

    For a simple eigenvalue this is the sign-minimized norm of the
    difference; for a cluster, the maximum over the cluster of the
    M-norm distance to the span of the projected reference eigenfunctions.
    """
    discrete = np.atleast_2d(discrete.T).T
    reference = np.atleast_2d(reference.T).T
    if discrete.shape[1] == 1 and reference.shape[1] == 1:
        x = discrete[:, 0]
        r = reference[:, 0]
        return float(
            min(_m_norm(M, x - r), _m_norm(M, x + r))
        )
    G = reference.T @ (M @ reference)
    evals, evecs = np.linalg.eigh(G)
    keep = evals > 1e-12 * max(evals.max(), 1e-300)
    basis = reference @ (evecs[:, keep] / np.sqrt(evals[keep]))
    worst = 0.0
    for j in range(discrete.shape[1]):
        x = discrete[:, j]
        proj = basis @ (basis.T @ (M @ x))
        worst = max(worst, _m_norm(M, x - proj))
    return float(worst)


def _m_norm(M, v):
    return np.sqrt(max(v @ (M @ v), 0.0))


def fit_rate(h, e) -> float:
    """Least-squares slope of log(e) against log(h)."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    if len(h) < 3 or len(h) != len(e):
        raise ValueError("rate fitting needs at least 3 (h, e) pairs")
    if np.any(h <= 0):
        raise ValueError("mesh sizes must be positive")
    if np.any(e <= 0):
        return math.inf  # saturated below the round-off floor
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


# ---------------------------------------------------------------------------
# Studies.
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EigenTrack:
    """Per-eigenvalue history across levels (cluster members share errors)."""

    index: int
    lambda_ref: float
    multiplicity: int
    lambdas: list[float] = field(default_factory=list)
    eig_errors: list[float] = field(default_factory=list)
    efun_errors: list[float] = field(default_factory=list)
    eig_rate: float = math.nan
    efun_rate: float = math.nan
    passed: bool = False


@dataclass(eq=False)
class ConvergenceReport:
    config: StudyConfig
    levels: list[int]
    h: list[float]
    guaranteed_rate: float
    tracks: list[EigenTrack]

    @property
    def all_pass(self) -> bool:
        return all(t.passed for t in self.tracks)


def _projected_reference(ref: ReferenceSpectrum, cluster: int, dofmap: DofMap):
    """Coarse-space coefficients (n_free, m) of the projected reference cluster."""
    if ref.mode == "analytic":
        cols = [
            l2_project(dofmap, lambda x, y, f=f: f(x, y)).coeffs
            for f in ref.functions[cluster]
        ]
    else:
        fdm = ref.fine_dofmap
        cols = [
            project_fine_to_coarse(fdm, fdm.full_coeffs(v), dofmap).coeffs
            for v in ref.fine_vectors[cluster].T
        ]
    return np.column_stack(cols)


def run_study(config: StudyConfig) -> ConvergenceReport:
    """Run the convergence study described by ``config``; deterministic."""
    ref = reference_eigenpairs(config)
    if ref.total() < config.n_eigs:
        raise ValueError("reference spectrum too short for requested n_eigs")

    tracks: list[EigenTrack] = []
    hs: list[float] = []
    for level in config.levels:
        form, sol = level_solution(
            config.domain, config.method, config.degree, config.penalty,
            level, config.n_eigs,
        )
        hs.append(form.h)
        pairing = match_eigenvalues(
            sol.eigenvalues, ref.values, ref.multiplicities
        )
        if not tracks:
            for ci, members in enumerate(pairing):
                for di in members:
                    tracks.append(
                        EigenTrack(
                            index=di,
                            lambda_ref=ref.values[ci],
                            multiplicity=ref.multiplicities[ci],
                        )
                    )
        M = form.M_free
        for ci, members in enumerate(pairing):
            lam_ref = ref.values[ci]
            cluster_err = max(abs(sol.eigenvalues[d] - lam_ref) for d in members)
            projected = _projected_reference(ref, ci, form.dofmap)
            efun_err = eigenfunction_error(
                M, sol.eigenvectors[:, members], projected
            )
            for d in members:
                tracks[d].lambdas.append(float(sol.eigenvalues[d]))
                tracks[d].eig_errors.append(float(cluster_err))
                tracks[d].efun_errors.append(float(efun_err))

    g_rate = guaranteed_rate(config)
    tail = slice(-3, None)
    for t in tracks:
        t.eig_rate = fit_rate(hs[tail], t.eig_errors[tail])
        t.efun_rate = fit_rate(hs[tail], t.efun_errors[tail])
        t.passed = t.eig_rate >= g_rate - RATE_TOLERANCE
    return ConvergenceReport(config, list(config.levels), hs, g_rate, tracks)
