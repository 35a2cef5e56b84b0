"""Structured triangular meshes for the unit square and L-shaped domains.

The mesh family is fixed: a small hand-built coarse triangulation per
domain, refined uniformly by midpoint (red) subdivision.  Refinement
halves the mesh size exactly and multiplies the triangle count by four,
so the convergence harness can fit rates against exact powers of two.
Child triangles of triangle ``t`` occupy indices ``4*t .. 4*t+3`` of the
refined mesh; cross-level transfer relies on this ancestor arithmetic.

Meshes are immutable after construction (all arrays are frozen) and may
be read concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import IO

import numpy as np

__all__ = [
    "MAX_LEVEL",
    "PolygonalDomain",
    "UNIT_SQUARE",
    "L_SHAPE",
    "Mesh",
    "EdgeAdjacency",
    "build_mesh",
    "refine_uniform",
    "edge_adjacency",
    "write_mesh_text",
]

MAX_LEVEL = 10


@dataclass(frozen=True)
class PolygonalDomain:
    """Simple counterclockwise polygon together with its elliptic regularity index."""

    name: str
    vertices: tuple[tuple[float, float], ...]
    elliptic_regularity_alpha: float

    def __post_init__(self):
        if not 0.5 < self.elliptic_regularity_alpha <= 1.0:
            raise ValueError("elliptic regularity index must lie in (1/2, 1]")
        if self.area <= 0.0:
            raise ValueError("polygon must be counterclockwise and non-degenerate")

    @property
    def area(self) -> float:
        v = np.asarray(self.vertices, dtype=float)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


UNIT_SQUARE = PolygonalDomain(
    "unit_square",
    ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)),
    1.0,
)

#: [-1, 1]^2 minus the third quadrant; the reentrant corner sits at the origin.
L_SHAPE = PolygonalDomain(
    "l_shape",
    ((-1.0, 0.0), (0.0, 0.0), (0.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)),
    2.0 / 3.0,
)

DOMAINS = {d.name: d for d in (UNIT_SQUARE, L_SHAPE)}

# Coarse triangulations: 2 triangles for the square, 6 for the L-shape
# (each unit square split along one diagonal, all positively oriented).
_COARSE = {
    "unit_square": (
        np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        np.array([[0, 1, 2], [0, 2, 3]]),
    ),
    "l_shape": (
        np.array(
            [
                [0.0, 0.0],
                [1.0, 0.0],
                [1.0, 1.0],
                [0.0, 1.0],
                [-1.0, 0.0],
                [-1.0, 1.0],
                [0.0, -1.0],
                [1.0, -1.0],
            ]
        ),
        np.array(
            [
                [0, 1, 2],
                [0, 2, 3],
                [4, 0, 3],
                [4, 3, 5],
                [6, 7, 1],
                [6, 1, 0],
            ]
        ),
    ),
}


class EdgeAdjacency:
    """Adjacency record of one edge: triangles K+/K- and the stored unit normal."""

    __slots__ = ("k_plus", "k_minus", "normal")

    def __init__(self, k_plus: int, k_minus: int | None, normal: np.ndarray):
        self.k_plus = k_plus
        self.k_minus = k_minus
        self.normal = normal


@dataclass(eq=False)
class Mesh:
    """Conforming triangulation with precomputed edge adjacency.

    Edge conventions, fixed once at construction:

    * ``edge_vertices[e] = (a, b)`` with ``a < b`` (global vertex indices).
    * Interior edges store ``edge_tris[e] = (K-, K+)`` with ``K- < K+`` and
      the unit normal points from K- into K+.
    * Boundary edges store ``edge_tris[e] = (K, -1)`` and the normal is the
      outward normal of the domain.
    * ``tri_edges[t, i]`` is the edge opposite local vertex ``i``.
    """

    domain: PolygonalDomain
    level: int
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) int
    edge_vertices: np.ndarray  # (ne, 2) int, sorted pairs
    edge_tris: np.ndarray  # (ne, 2) int, second entry -1 on the boundary
    edge_normals: np.ndarray  # (ne, 2)
    edge_lengths: np.ndarray  # (ne,)
    edge_is_boundary: np.ndarray  # (ne,) bool
    tri_edges: np.ndarray  # (nt, 3) int

    def __post_init__(self):
        for a in (
            self.vertices,
            self.triangles,
            self.edge_vertices,
            self.edge_tris,
            self.edge_normals,
            self.edge_lengths,
            self.edge_is_boundary,
            self.tri_edges,
        ):
            a.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edge_vertices)

    @cached_property
    def h(self) -> float:
        """Mesh size: maximum triangle diameter (longest edge)."""
        return float(self.edge_lengths.max())

    @cached_property
    def tri_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine maps x = v0 + J xi; columns of J are the two edge vectors."""
        v = self.vertices[self.triangles]
        J = np.empty((self.n_triangles, 2, 2))
        J[:, :, 0] = v[:, 1] - v[:, 0]
        J[:, :, 1] = v[:, 2] - v[:, 0]
        J.setflags(write=False)
        return J

    @cached_property
    def jacobian_dets(self) -> np.ndarray:
        J = self.jacobians
        d = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        d.setflags(write=False)
        return d

    @cached_property
    def jacobian_invs(self) -> np.ndarray:
        J = self.jacobians
        d = self.jacobian_dets
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = J[:, 1, 1]
        Jinv[:, 0, 1] = -J[:, 0, 1]
        Jinv[:, 1, 0] = -J[:, 1, 0]
        Jinv[:, 1, 1] = J[:, 0, 0]
        Jinv /= d[:, None, None]
        Jinv.setflags(write=False)
        return Jinv

    @cached_property
    def vertex_is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edge_vertices[self.edge_is_boundary].ravel()] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def centroids(self) -> np.ndarray:
        c = self.vertices[self.triangles].mean(axis=1)
        c.setflags(write=False)
        return c


def _build_edges(vertices, triangles):
    nt = len(triangles)
    nv = len(vertices)
    # Directed edge opposite local vertex i runs from v_{i+1} to v_{i+2}.
    a = triangles[:, [1, 2, 0]].ravel()
    b = triangles[:, [2, 0, 1]].ravel()
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    keys = lo.astype(np.int64) * nv + hi
    uniq, inverse = np.unique(keys, return_inverse=True)
    ne = len(uniq)
    tri_edges = inverse.reshape(nt, 3)

    edge_vertices = np.column_stack([uniq // nv, uniq % nv]).astype(np.int64)

    entry_tri = np.repeat(np.arange(nt), 3)
    order = np.lexsort((entry_tri, inverse))
    sorted_edges = inverse[order]
    sorted_tris = entry_tri[order]
    counts = np.bincount(sorted_edges, minlength=ne)
    if counts.max() > 2 or counts.min() < 1:
        raise ValueError("non-manifold mesh: edge shared by more than two triangles")
    first = np.searchsorted(sorted_edges, np.arange(ne))
    edge_tris = np.full((ne, 2), -1, dtype=np.int64)
    edge_tris[:, 0] = sorted_tris[first]
    interior = counts == 2
    edge_tris[interior, 1] = sorted_tris[np.minimum(first + 1, len(sorted_tris) - 1)][interior]

    # Normals: perpendicular of the (lo -> hi) tangent, oriented away from
    # edge_tris[:, 0] (K- for interior edges, the only triangle on the boundary).
    tang = vertices[edge_vertices[:, 1]] - vertices[edge_vertices[:, 0]]
    lengths = np.hypot(tang[:, 0], tang[:, 1])
    normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / lengths[:, None]
    mid = 0.5 * (vertices[edge_vertices[:, 0]] + vertices[edge_vertices[:, 1]])
    t0 = edge_tris[:, 0]
    opp_local = np.argmax(tri_edges[t0] == np.arange(ne)[:, None], axis=1)
    opp_vertex = triangles[t0, opp_local]
    inward = np.einsum("ei,ei->e", normals, vertices[opp_vertex] - mid) > 0
    normals[inward] *= -1.0

    return edge_vertices, edge_tris, normals, lengths, ~interior, tri_edges


def _make_mesh(domain, level, vertices, triangles) -> Mesh:
    ev, et, nrm, lens, bnd, te = _build_edges(vertices, triangles)
    mesh = Mesh(domain, level, vertices, triangles, ev, et, nrm, lens, bnd, te)
    _validate(mesh)
    return mesh


def _validate(mesh: Mesh):
    areas = mesh.tri_areas
    if np.any(areas <= 0):
        raise ValueError("mesh contains a non-positively-oriented triangle")
    total = float(areas.sum())
    if abs(total - mesh.domain.area) > 1e-12 * mesh.domain.area:
        raise ValueError(
            f"triangle areas sum to {total}, expected {mesh.domain.area}"
        )
    # Both test domains are simply connected, so Euler's formula gives 1.
    euler = mesh.n_vertices - mesh.n_edges + mesh.n_triangles
    if euler != 1:
        raise ValueError(f"Euler characteristic {euler} != 1")


def build_mesh(domain: PolygonalDomain, level: int) -> Mesh:
    """Triangulate ``domain`` and refine uniformly ``level`` times.

    The mesh size is h0 * 2**(-level) with h0 = sqrt(2).
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    if level > MAX_LEVEL:
        raise ValueError(f"level {level} exceeds the memory guard ({MAX_LEVEL})")
    if domain.name not in _COARSE:
        raise ValueError(f"no coarse triangulation for domain {domain.name!r}")
    vertices, triangles = _COARSE[domain.name]
    mesh = _make_mesh(domain, 0, vertices.copy(), triangles.copy())
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into 4 congruent children (midpoint subdivision).

    Children of parent ``t`` get indices ``4*t .. 4*t+3``; the new midpoint
    vertex of edge ``e`` gets index ``n_vertices + e``.
    """
    nv = mesh.n_vertices
    nt = mesh.n_triangles
    mids = 0.5 * (
        mesh.vertices[mesh.edge_vertices[:, 0]]
        + mesh.vertices[mesh.edge_vertices[:, 1]]
    )
    vertices = np.vstack([mesh.vertices, mids])

    tri = mesh.triangles
    m = nv + mesh.tri_edges  # (nt, 3): midpoint opposite local vertex i
    children = np.empty((4 * nt, 3), dtype=np.int64)
    children[0::4] = np.column_stack([tri[:, 0], m[:, 2], m[:, 1]])
    children[1::4] = np.column_stack([tri[:, 1], m[:, 0], m[:, 2]])
    children[2::4] = np.column_stack([tri[:, 2], m[:, 1], m[:, 0]])
    children[3::4] = m
    return _make_mesh(mesh.domain, mesh.level + 1, vertices, children)


def edge_adjacency(mesh: Mesh, edge_index: int) -> EdgeAdjacency:
    """Adjacent triangles and the stored unit normal of one edge.

    For interior edges the normal points from ``k_minus`` into ``k_plus``;
    for boundary edges ``k_minus`` is None and the normal is outward.
    """
    ne = mesh.n_edges
    if not 0 <= edge_index < ne:
        raise IndexError(f"edge index {edge_index} out of range [0, {ne})")
    t0, t1 = mesh.edge_tris[edge_index]
    normal = mesh.edge_normals[edge_index]
    if t1 < 0:
        return EdgeAdjacency(k_plus=int(t0), k_minus=None, normal=normal)
    return EdgeAdjacency(k_plus=int(t1), k_minus=int(t0), normal=normal)


def write_mesh_text(mesh: Mesh, stream: IO[str]):
    """Plain-text dump: one "v x y" line per vertex, one "t i j k" per triangle."""
    for x, y in mesh.vertices:
        stream.write(f"v {x:.17g} {y:.17g}\n")
    for i, j, k in mesh.triangles:
        stream.write(f"t {i} {j} {k}\n")
