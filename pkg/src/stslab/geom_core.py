"""Simplicial meshes embedded in space-time, simplex measures and hull checks.

Meshes are stored as plain numpy arrays: an ``(n, dim_embed)`` coordinate
array whose last column is time, and an ``(m, dim_cell + 1)`` connectivity
array. Only triangles and tetrahedra are supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import ConformityError, InvalidInputError, InvalidMeshError

__all__ = [
    "VertexTag",
    "Patch",
    "SimplicialMesh",
    "MeasureReport",
    "ClosureReport",
    "heron_area",
    "cayley_menger_volume",
    "triangle_areas",
    "tetrahedron_volumes",
    "cell_measures",
    "total_measure",
    "merge_and_synchronize",
    "hull_closure_check",
    "facet_census",
    "generalized_cross",
]

HERON_CLAMP = 1e-14
CM_CLAMP = 1e-13
DEGENERACY_TOL = 1e-12


class VertexTag(IntEnum):
    INTERIOR = 0
    BOX_BOUNDARY = 1
    OBJECT_BOUNDARY = 2


class Patch(IntEnum):
    INITIAL = 0
    INTERMEDIATE = 1
    TERMINATING = 2


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """Vertices, simplex connectivity and per-vertex / per-cell labels.

    ``owner`` records which surface a boundary vertex belongs to: a shape
    index for object-boundary vertices, ``-1`` otherwise.
    """

    vertices: np.ndarray
    cells: np.ndarray
    vertex_tag: np.ndarray | None = None
    patch: np.ndarray | None = None
    owner: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2:
            raise InvalidMeshError("vertices must be a 2-d array")
        c = np.asarray(self.cells, dtype=np.int64)
        if c.size == 0:
            c = c.reshape(0, c.shape[1] if c.ndim == 2 else 3)
        if c.ndim != 2 or c.shape[1] not in (3, 4):
            raise InvalidMeshError("cells must be triangles or tetrahedra")
        n = len(v)
        tag = (np.zeros(n, np.int8) if self.vertex_tag is None
               else np.asarray(self.vertex_tag, dtype=np.int8))
        patch = (np.zeros(len(c), np.int8) if self.patch is None
                 else np.asarray(self.patch, dtype=np.int8))
        owner = (np.full(n, -1, np.int32) if self.owner is None
                 else np.asarray(self.owner, dtype=np.int32))
        if tag.shape != (n,) or owner.shape != (n,):
            raise InvalidMeshError("per-vertex arrays must match the vertex count")
        if patch.shape != (len(c),):
            raise InvalidMeshError("patch labels must match the cell count")
        if len(c) and (c.min() < 0 or c.max() >= n):
            raise InvalidMeshError("cell vertex index out of range")
        for name, arr in (("vertices", v), ("cells", c), ("vertex_tag", tag),
                          ("patch", patch), ("owner", owner)):
            object.__setattr__(self, name, _readonly(arr))

    @property
    def dim_embed(self) -> int:
        return self.vertices.shape[1]

    @property
    def dim_cell(self) -> int:
        return self.cells.shape[1] - 1

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def replace(self, **changes) -> "SimplicialMesh":
        fields = dict(vertices=self.vertices, cells=self.cells,
                      vertex_tag=self.vertex_tag, patch=self.patch, owner=self.owner)
        fields.update(changes)
        return SimplicialMesh(**fields)

    def with_patch(self, patch: Patch) -> "SimplicialMesh":
        return self.replace(patch=np.full(self.n_cells, int(patch), np.int8))

    def validate(self, check_measure: bool = True) -> None:
        """Raise :class:`InvalidMeshError` unless every mesh invariant holds."""
        if not np.all(np.isfinite(self.vertices)):
            raise InvalidMeshError("non-finite vertex coordinates")
        if self.dim_embed not in (3, 4):
            raise InvalidMeshError(f"embedding dimension {self.dim_embed} not in (3, 4)")
        if self.n_cells == 0:
            return
        s = np.sort(self.cells, axis=1)
        rep = np.nonzero(np.any(s[:, 1:] == s[:, :-1], axis=1))[0]
        if len(rep):
            raise InvalidMeshError(f"cells with repeated vertices: {rep[:10].tolist()}")
        _, counts = np.unique(s, axis=0, return_counts=True)
        if np.any(counts > 1):
            raise InvalidMeshError(f"{int(np.sum(counts > 1))} duplicated cells")
        if check_measure:
            bad = degenerate_cells(self)
            if len(bad):
                raise InvalidMeshError(f"cells below degeneracy tolerance: {bad[:10].tolist()}")

    def equals(self, other: "SimplicialMesh") -> bool:
        return (self.vertices.shape == other.vertices.shape
                and self.cells.shape == other.cells.shape
                and np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.cells, other.cells)
                and np.array_equal(self.vertex_tag, other.vertex_tag)
                and np.array_equal(self.patch, other.patch))


def empty_mesh(dim_embed: int, dim_cell: int) -> SimplicialMesh:
    return SimplicialMesh(np.zeros((0, dim_embed)), np.zeros((0, dim_cell + 1), np.int64))


# ---------------------------------------------------------------------------
# simplex measures


def _check_points(*pts):
    arrs = [np.asarray(p, dtype=float) for p in pts]
    dims = {a.shape for a in arrs}
    if len(dims) != 1 or arrs[0].ndim != 1:
        raise InvalidInputError("points must share one embedding dimension")
    for a in arrs:
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("non-finite coordinate")
    return arrs


def _heron(a, b, c):
    # Kahan's rearrangement of Heron's formula, a >= b >= c.
    s = np.sort(np.stack([a, b, c]), axis=0)[::-1]
    a, b, c = s
    rad = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    semi = 0.5 * (a + b + c)
    tol = HERON_CLAMP * 16.0 * semi ** 4
    rad = np.where((rad < 0) & (rad >= -tol), 0.0, rad)
    return 0.25 * np.sqrt(np.maximum(rad, 0.0))


def heron_area(p, q, r) -> float:
    """Area of the triangle ``pqr`` in any embedding dimension.

    >>> heron_area((0, 0, 0), (1, 0, 0), (0, 1, 0))
    0.5
    """
    p, q, r = _check_points(p, q, r)
    a = math.dist(q, r)
    b = math.dist(p, r)
    c = math.dist(p, q)
    return float(_heron(np.array(a), np.array(b), np.array(c)))


def triangle_areas(P, Q, R) -> np.ndarray:
    """Vectorised :func:`heron_area` over stacks of vertices."""
    a = np.linalg.norm(Q - R, axis=-1)
    b = np.linalg.norm(P - R, axis=-1)
    c = np.linalg.norm(P - Q, axis=-1)
    return _heron(a, b, c)


def _cm_dets(A, B, C, E):
    pts = (A, B, C, E)
    m = len(A)
    theta = np.zeros((m, 5, 5))
    theta[:, 0, 1:] = 1.0
    theta[:, 1:, 0] = 1.0
    dmax = np.zeros(m)
    for i in range(4):
        for j in range(i + 1, 4):
            d2 = np.sum((pts[i] - pts[j]) ** 2, axis=-1)
            theta[:, i + 1, j + 1] = d2
            theta[:, j + 1, i + 1] = d2
            dmax = np.maximum(dmax, d2)
    det = np.linalg.det(theta)
    return det, dmax


def tetrahedron_volumes(A, B, C, E, chunk: int = 200_000) -> np.ndarray:
    """Vectorised :func:`cayley_menger_volume`."""
    A = np.asarray(A, float)
    out = np.empty(len(A))
    for s in range(0, len(A), chunk):
        sl = slice(s, s + chunk)
        det, dmax = _cm_dets(A[sl], B[sl], C[sl], E[sl])
        tol = CM_CLAMP * dmax ** 3
        det = np.where((det < 0) & (det >= -tol), 0.0, det)
        out[sl] = np.sqrt(np.maximum(det, 0.0) / 288.0)
    return out


def cayley_menger_volume(a, b, c, e) -> float:
    """Volume of tetrahedron ``abce`` from its six pairwise distances.

    Works in any embedding dimension, which is what makes it usable on
    tetrahedra living in 4D space-time.
    """
    a, b, c, e = _check_points(a, b, c, e)
    return float(tetrahedron_volumes(a[None], b[None], c[None], e[None])[0])


def cell_measures(mesh: SimplicialMesh) -> np.ndarray:
    V, T = mesh.vertices, mesh.cells
    if mesh.n_cells == 0:
        return np.zeros(0)
    if mesh.dim_cell == 2:
        return triangle_areas(V[T[:, 0]], V[T[:, 1]], V[T[:, 2]])
    return tetrahedron_volumes(V[T[:, 0]], V[T[:, 1]], V[T[:, 2]], V[T[:, 3]])


def characteristic_lengths(mesh: SimplicialMesh) -> np.ndarray:
    """Longest edge of each cell."""
    V, T = mesh.vertices, mesh.cells
    k = T.shape[1]
    longest = np.zeros(len(T))
    for i in range(k):
        for j in range(i + 1, k):
            longest = np.maximum(longest, np.linalg.norm(V[T[:, i]] - V[T[:, j]], axis=1))
    return longest


def degenerate_cells(mesh: SimplicialMesh, tol: float = DEGENERACY_TOL) -> np.ndarray:
    meas = cell_measures(mesh)
    ell = characteristic_lengths(mesh)
    return np.nonzero(meas <= tol * ell ** mesh.dim_cell)[0]


@dataclass
class MeasureReport:
    total: float
    per_patch: dict
    cell_count: int
    vertex_count: int


def total_measure(mesh: SimplicialMesh) -> MeasureReport:
    """Sum of triangle areas (Heron) or tetrahedron volumes (Cayley-Menger)."""
    if mesh.n_cells == 0:
        return MeasureReport(0.0, {p: 0.0 for p in Patch}, 0, mesh.n_vertices)
    meas = cell_measures(mesh)
    per_patch = {p: float(np.sum(meas[mesh.patch == int(p)])) for p in Patch}
    return MeasureReport(float(np.sum(meas)), per_patch, mesh.n_cells, mesh.n_vertices)


def concatenate(meshes) -> SimplicialMesh:
    dims = {(m.dim_embed, m.dim_cell) for m in meshes}
    if len(dims) != 1:
        raise InvalidMeshError(f"cannot combine meshes with dimensions {sorted(dims)}")
    offsets = np.cumsum([0] + [m.n_vertices for m in meshes])
    return SimplicialMesh(
        np.concatenate([m.vertices for m in meshes]),
        np.concatenate([m.cells + off for m, off in zip(meshes, offsets)]),
        np.concatenate([m.vertex_tag for m in meshes]),
        np.concatenate([m.patch for m in meshes]),
        np.concatenate([m.owner for m in meshes]),
    )


def merge_and_synchronize(meshes, tol: float) -> SimplicialMesh:
    """Glue meshes together, unifying vertices closer than ``tol``.

    The coordinates of the lowest-numbered vertex in each cluster are kept
    verbatim so coincident copies stay bit-identical. Duplicate cells are
    dropped; a cell that loses a vertex to the merge is an error.
    """
    if tol <= 0:
        raise InvalidInputError("merge tolerance must be positive")
    if isinstance(meshes, SimplicialMesh):
        meshes = [meshes]
    mesh = concatenate(list(meshes))
    n = mesh.n_vertices
    if n:
        pairs = cKDTree(mesh.vertices).query_pairs(tol, output_type="ndarray")
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, label = connected_components(g, directed=False)
        first = np.full(label.max() + 1, n, np.int64)
        np.minimum.at(first, label, np.arange(n))
        rep = first[label]
    else:
        rep = np.zeros(0, np.int64)
    uniq, new_index = np.unique(rep, return_inverse=True)
    tag = np.zeros(len(uniq), np.int8)
    np.maximum.at(tag, new_index, mesh.vertex_tag)
    owner = np.full(len(uniq), -1, np.int32)
    np.maximum.at(owner, new_index, mesh.owner)
    cells = new_index[mesh.cells] if mesh.n_cells else mesh.cells
    if len(cells):
        s = np.sort(cells, axis=1)
        collapsed = np.nonzero(np.any(s[:, 1:] == s[:, :-1], axis=1))[0]
        if len(collapsed):
            raise ConformityError(
                f"merge collapses {len(collapsed)} cells, e.g. {collapsed[:10].tolist()}",
                cells=collapsed.tolist())
        _, keep = np.unique(s, axis=0, return_index=True)
        keep = np.sort(keep)
        cells = cells[keep]
        patch = mesh.patch[keep]
    else:
        patch = mesh.patch
    return SimplicialMesh(mesh.vertices[uniq], cells, tag, patch, owner)


# ---------------------------------------------------------------------------
# closure


def _perm_parity(a: np.ndarray) -> np.ndarray:
    """Parity (+1/-1) of the permutation sorting each row of ``a``."""
    k = a.shape[1]
    inv = np.zeros(len(a), np.int64)
    for i in range(k):
        for j in range(i + 1, k):
            inv += a[:, i] > a[:, j]
    return np.where(inv % 2 == 0, 1, -1)


def oriented_facets(cells: np.ndarray):
    """Sorted facet keys, the owning cell and induced orientation sign."""
    m, k = cells.shape
    keys, signs, owners = [], [], []
    for i in range(k):
        f = np.delete(cells, i, axis=1)
        keys.append(np.sort(f, axis=1))
        signs.append(((-1) ** i) * _perm_parity(f))
        owners.append(np.arange(m))
    return np.concatenate(keys), np.concatenate(signs), np.concatenate(owners)


def facet_census(cells: np.ndarray):
    """Unique codimension-1 facets with their incidence counts."""
    keys, _, _ = oriented_facets(cells)
    return np.unique(keys, axis=0, return_counts=True)


def generalized_cross(vectors: np.ndarray) -> np.ndarray:
    """Normal ``n`` of ``k`` stacked vectors in R^(k+1) with ``n.x = det[u1..uk, x]``.

    ``vectors`` has shape ``(m, k, k + 1)``.
    """
    m, k, d = vectors.shape
    if d != k + 1:
        raise InvalidInputError("need k vectors in R^(k+1)")
    if d == 3:
        return np.cross(vectors[:, 0], vectors[:, 1])
    out = np.empty((m, d))
    for j in range(d):
        minor = np.delete(vectors, j, axis=2)
        out[:, j] = ((-1) ** (k + j)) * np.linalg.det(minor)
    return out


def cell_normals(mesh: SimplicialMesh) -> np.ndarray:
    """Measure-weighted oriented normals of hypersurface cells."""
    V, T = mesh.vertices, mesh.cells
    edges = np.stack([V[T[:, i]] - V[T[:, 0]] for i in range(1, T.shape[1])], axis=1)
    return generalized_cross(edges) / math.factorial(mesh.dim_cell)


@dataclass
class ClosureReport:
    closed: bool
    boundary_facets: np.ndarray
    nonmanifold_facets: np.ndarray
    consistently_oriented: bool
    net_normal: np.ndarray
    net_normal_rel: float
    total_measure: float
    messages: list = field(default_factory=list)

    def summary(self) -> str:
        state = "closed" if self.closed else "OPEN"
        return (f"{state}: {len(self.boundary_facets)} boundary facets, "
                f"{len(self.nonmanifold_facets)} non-manifold facets, "
                f"net normal {self.net_normal_rel:.2e}")


def orient_consistently(cells: np.ndarray):
    """Flip cells so that every shared facet is traversed in opposite senses.

    Returns ``(cells, ok)``; ``ok`` is False for non-orientable meshes.
    """
    cells = np.array(cells)
    keys, signs, owner = oriented_facets(cells)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    nbrs = [[] for _ in range(len(cells))]
    for a, b in zip(order[:-1], order[1:]):
        if inv[a] == inv[b]:
            nbrs[owner[a]].append((owner[b], signs[a] * signs[b]))
            nbrs[owner[b]].append((owner[a], signs[a] * signs[b]))
    flip = np.zeros(len(cells), np.int8)
    seen = np.zeros(len(cells), bool)
    ok = True
    for start in range(len(cells)):
        if seen[start]:
            continue
        seen[start] = True
        stack = [start]
        while stack:
            c = stack.pop()
            for d, rel in nbrs[c]:
                # same induced sign means the two cells disagree
                want = flip[c] ^ (1 if rel > 0 else 0)
                if not seen[d]:
                    seen[d] = True
                    flip[d] = want
                    stack.append(d)
                elif flip[d] != want:
                    ok = False
    cells[flip == 1, :2] = cells[flip == 1, 1::-1]
    return cells, ok


def hull_closure_check(mesh: SimplicialMesh, normal_tol: float = 1e-9) -> ClosureReport:
    """Check that a hypersurface mesh bounds a region.

    Every facet must be shared by exactly two cells, the two must induce
    opposite orientations on it, and the measure-weighted normals must sum
    to zero relative to the total measure.
    """
    if mesh.n_cells == 0:
        empty = np.zeros((0, mesh.dim_cell), np.int64)
        return ClosureReport(True, empty, empty, True, np.zeros(mesh.dim_embed), 0.0, 0.0)
    keys, signs, _ = oriented_facets(mesh.cells)
    uniq, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    boundary = uniq[counts == 1]
    nonmanifold = uniq[counts > 2]
    sign_sum = np.zeros(len(uniq), np.int64)
    np.add.at(sign_sum, inv, signs)
    consistent = bool(np.all(sign_sum[counts == 2] == 0))
    messages = []
    cells = mesh.cells
    if not consistent and len(boundary) == 0 and len(nonmanifold) == 0:
        cells, consistent = orient_consistently(mesh.cells)
        messages.append("cells re-oriented before the normal check")
    meas = total_measure(mesh).total
    normals = cell_normals(mesh.replace(cells=cells))
    net = normals.sum(axis=0)
    rel = float(np.linalg.norm(net) / meas) if meas > 0 else 0.0
    closed = (len(boundary) == 0 and len(nonmanifold) == 0
              and consistent and rel <= normal_tol)
    if not consistent:
        messages.append("mesh is not consistently orientable")
    return ClosureReport(closed, boundary, nonmanifold, consistent, net, rel, meas, messages)
