"""Closed tetrahedral hulls of 3D+t space-time slabs.

The boundary triangles of the spatial tet mesh at ``t_n`` are extruded
along their vertex trajectories into triangular prisms in R^4. Each prism
is split into tetrahedra by one of two conforming templates on the
reference prism

    r1 (0,0,0)  r2 (1,0,0)  r3 (0,1,0)  r4 (0,0,1)  r5 (1,0,1)  r6 (0,1,1)

with Steiner points at the three quad-face centroids (``r7`` on
r2-r3-r6-r5, ``r8`` on r1-r2-r5-r4, ``r9`` on r1-r3-r6-r4) and, for
strategy E, the prism centroid ``r10``. Both templates cut every quad into
the same four triangles through its centroid, which is what keeps
neighbouring prisms conforming.
"""

from __future__ import annotations

import contextlib
import ctypes
import logging
import os
import shlex
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree

from .errors import (ClosureError, ConformityError, DegenerateSplitError, ExternalMesherError,
                     InvalidInputError, InvalidMeshError, StSlabError, TanglingError)
from .geom_core import (Patch, SimplicialMesh, VertexTag, cell_measures, generalized_cross,
                        hull_closure_check, merge_and_synchronize, tetrahedron_volumes)
from .kinematics import MovingScene, rotation_matrix
from .slab import Slab, SlabConfig, reversed_cells
from .trajectory import advect_vertices

log = logging.getLogger(__name__)

REFERENCE_PRISM = np.array([
    [0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1]], float)

# 1-based labels r1..r10
C_TETS = [(1, 2, 3, 7), (4, 5, 6, 7), (1, 2, 7, 8), (2, 5, 7, 8), (4, 5, 7, 8),
          (1, 4, 7, 8), (1, 3, 7, 9), (3, 6, 7, 9), (4, 6, 7, 9), (1, 4, 7, 9)]

# every quad triangle joined to the prism centroid, plus the two caps
E_TETS = [(2, 3, 7, 10), (3, 6, 7, 10), (6, 5, 7, 10), (5, 2, 7, 10),
          (1, 2, 8, 10), (2, 5, 8, 10), (5, 4, 8, 10), (4, 1, 8, 10),
          (1, 3, 9, 10), (3, 6, 9, 10), (6, 4, 9, 10), (4, 1, 9, 10),
          (1, 2, 3, 10), (4, 5, 6, 10)]

# the fourteen-tet list exactly as printed in the source publication; it
# does not tile the prism (see tests) and is kept for inspection only
E_TETS_PRINTED = [(2, 3, 5, 10), (2, 3, 6, 10), (2, 5, 6, 10), (3, 5, 6, 10),
                  (1, 2, 4, 10), (1, 2, 5, 10), (1, 4, 5, 10), (2, 4, 5, 10),
                  (1, 3, 4, 10), (1, 3, 6, 10), (1, 4, 6, 10), (3, 4, 6, 10),
                  (1, 2, 3, 10), (4, 5, 6, 10)]

# quads as label tuples: (face Steiner label, corner labels in cyclic order)
QUADS = {7: (2, 3, 6, 5), 8: (1, 2, 5, 4), 9: (1, 3, 6, 4)}


def reference_points() -> np.ndarray:
    """Coordinates of r1..r10."""
    r = REFERENCE_PRISM
    r7 = 0.25 * (r[1] + r[2] + r[4] + r[5])
    r8 = 0.25 * (r[0] + r[1] + r[3] + r[4])
    r9 = 0.25 * (r[0] + r[2] + r[3] + r[5])
    r10 = r.mean(axis=0)
    return np.vstack([r, r7, r8, r9, r10])


def _oriented_template(tets):
    """0-based template with every tet positive on the reference prism."""
    P = reference_points()
    T = np.array(tets, np.int64) - 1
    a, b, c, d = (P[T[:, i]] for i in range(4))
    vol = np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a)
    T[vol < 0] = T[vol < 0][:, [1, 0, 2, 3]]
    return T


TEMPLATES = {"C": _oriented_template(C_TETS), "E": _oriented_template(E_TETS)}


@dataclass
class TriangularPrism:
    """Bottom triangle at ``t_n`` and its trajectory image at ``t_np1``;
    ``top[i]`` is the image of ``bottom[i]``."""

    bottom: tuple
    top: tuple

    def __post_init__(self):
        if len(self.bottom) != 3 or len(self.top) != 3:
            raise InvalidInputError("a prism needs three bottom and three top vertices")


class FaceSteinerRegistry:
    """Steiner vertices shared between prisms.

    Lateral quads are keyed by their four sorted corner indices. Indices
    are assigned in two phases (collect every key, then number them in
    sorted key order) so numbering never depends on traversal order.
    """

    def __init__(self, coords: np.ndarray, base_index: int | None = None):
        self.coords = np.asarray(coords, float)
        self.base = len(self.coords) if base_index is None else int(base_index)
        self.keys = np.zeros((0, 4), np.int64)
        self.points = np.zeros((0, self.coords.shape[1]))
        self.prism_centroids = np.zeros(0, np.int64)
        self.centroid_points = np.zeros((0, self.coords.shape[1]))

    @staticmethod
    def quad_keys(bottom: np.ndarray, top: np.ndarray) -> np.ndarray:
        """Keys of the quads (r7, r8, r9) of every prism, shape ``(P, 3, 4)``."""
        b0, b1, b2 = bottom.T
        t0, t1, t2 = top.T
        q7 = np.column_stack([b1, b2, t2, t1])
        q8 = np.column_stack([b0, b1, t1, t0])
        q9 = np.column_stack([b0, b2, t2, t0])
        return np.sort(np.stack([q7, q8, q9], axis=1), axis=2)

    def build(self, bottom: np.ndarray, top: np.ndarray, with_centroids: bool):
        keys = self.quad_keys(bottom, top)
        flat = keys.reshape(-1, 4)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        self.keys = uniq
        self.points = self.coords[uniq].sum(axis=1) / 4.0
        face_index = self.base + inv.reshape(-1, 3)
        n_faces = len(uniq)
        if with_centroids:
            self.prism_centroids = self.base + n_faces + np.arange(len(bottom))
            corners = np.concatenate([bottom, top], axis=1)
            self.centroid_points = self.coords[corners].sum(axis=1) / 6.0
        else:
            self.prism_centroids = np.full(len(bottom), -1, np.int64)
            self.centroid_points = np.zeros((0, self.coords.shape[1]))
        return face_index

    def lookup(self, corners) -> int:
        key = np.sort(np.asarray(corners, np.int64))
        hit = np.nonzero(np.all(self.keys == key, axis=1))[0]
        if len(hit) == 0:
            raise KeyError(f"quad {key.tolist()} not registered")
        return int(self.base + hit[0])

    def all_points(self) -> np.ndarray:
        return np.concatenate([self.points, self.centroid_points])


def split_prisms(bottom, top, registry: FaceSteinerRegistry, strategy: str = "E") -> np.ndarray:
    """Tetrahedra of every prism, as global indices of shape ``(P, k, 4)``."""
    if strategy not in TEMPLATES:
        raise InvalidInputError(f"unknown split strategy {strategy!r}")
    bottom = np.asarray(bottom, np.int64).reshape(-1, 3)
    top = np.asarray(top, np.int64).reshape(-1, 3)
    faces = registry.build(bottom, top, with_centroids=(strategy == "E"))
    labels = np.concatenate([bottom, top, faces, registry.prism_centroids[:, None]], axis=1)
    T = TEMPLATES[strategy]
    return labels[:, T]


def _all_coords(registry):
    return np.concatenate([registry.coords, registry.all_points()])


def _check_split(coords, tets, prism_ids, tol_scale):
    V = coords[tets.reshape(-1, 4)]
    vol = tetrahedron_volumes(V[:, 0], V[:, 1], V[:, 2], V[:, 3]).reshape(tets.shape[:2])
    bad = np.nonzero(np.any(vol <= 1e-12 * tol_scale ** 3, axis=1))[0]
    if len(bad):
        p = int(prism_ids[bad[0]])
        raise DegenerateSplitError(f"prism {p} splits into a degenerate tetrahedron", prism=p)
    return vol


def _single_prism(prism: TriangularPrism, registry: FaceSteinerRegistry, strategy: str):
    tets = split_prisms([prism.bottom], [prism.top], registry, strategy)
    coords = _all_coords(registry)
    scale = np.max(np.ptp(coords[np.r_[prism.bottom, prism.top]], axis=0))
    _check_split(coords, tets, np.array([0]), scale)
    return tets[0]


def split_prism_C(prism: TriangularPrism, registry: FaceSteinerRegistry) -> np.ndarray:
    """Ten tetrahedra hubbed at the r7 face centroid."""
    return _single_prism(prism, registry, "C")


def split_prism_E(prism: TriangularPrism, registry: FaceSteinerRegistry) -> np.ndarray:
    """Fourteen tetrahedra coned from the prism centroid."""
    return _single_prism(prism, registry, "E")


def reference_split(strategy: str, printed: bool = False) -> SimplicialMesh:
    """The reference prism split by a template, as a 3D tet mesh of r1..r10."""
    if printed:
        T = np.array(E_TETS_PRINTED, np.int64) - 1
    else:
        T = TEMPLATES[strategy]
    P = reference_points()
    used = np.unique(T)
    remap = np.full(10, -1, np.int64)
    remap[used] = np.arange(len(used))
    return SimplicialMesh(P[used], remap[T])


# ---------------------------------------------------------------------------
# boundary extraction


_TET_FACES = np.array([(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)])


def extract_boundary_triangles(mesh: SimplicialMesh):
    """Boundary faces of a tet mesh, oriented with outward normals.

    Returns ``(triangles, owners)``; ``owners`` is -1 for box faces and the
    shape index for shape faces.
    """
    X = mesh.vertices[:, :3]
    T = mesh.cells
    if len(T) == 0:
        return np.zeros((0, 3), np.int64), np.zeros(0, np.int64)
    F = T[:, _TET_FACES].reshape(-1, 3)
    opp = T.reshape(-1)  # face i is opposite vertex i
    key = np.sort(F, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts > 2):
        raise InvalidMeshError(f"{int(np.sum(counts > 2))} faces shared by more than two tets")
    sel = counts[inv] == 1
    tri = F[sel]
    apex = opp[sel]
    a, b, c = X[tri[:, 0]], X[tri[:, 1]], X[tri[:, 2]]
    n = np.cross(b - a, c - a)
    inward = np.einsum("ij,ij->i", n, X[apex] - a) > 0
    tri[inward] = tri[inward][:, [0, 2, 1]]
    tags = mesh.vertex_tag[tri]
    owners = mesh.owner[tri]
    box = np.all(tags == int(VertexTag.BOX_BOUNDARY), axis=1)
    obj = np.all(tags == int(VertexTag.OBJECT_BOUNDARY), axis=1) & np.all(owners == owners[:, :1], axis=1)
    if not np.all(box | obj):
        bad = np.nonzero(~(box | obj))[0]
        raise InvalidMeshError(f"{len(bad)} boundary faces mix box and shape vertices")
    own = np.where(box, -1, owners[:, 0]).astype(np.int64)
    order = np.lexsort((tri[:, 2], tri[:, 1], tri[:, 0], own))
    return tri[order], own[order]


def shell_components(tris: np.ndarray):
    """Connected components of a triangle shell (by shared vertices)."""
    from scipy.sparse.csgraph import connected_components
    n = int(tris.max()) + 1
    rows = np.repeat(np.arange(len(tris)), 3)
    g = coo_matrix((np.ones(len(rows)), (rows, tris.ravel())), shape=(len(tris), n))
    adj = (g @ g.T).tocoo()
    k, lab = connected_components(adj, directed=False)
    return k, lab


# ---------------------------------------------------------------------------
# terminating hyperplane


def _laplacian(T, n):
    e = np.unique(np.sort(np.concatenate([T[:, [0, 1]], T[:, [0, 2]], T[:, [0, 3]],
                                          T[:, [1, 2]], T[:, [1, 3]], T[:, [2, 3]]]), axis=1), axis=0)
    r = np.concatenate([e[:, 0], e[:, 1]])
    c = np.concatenate([e[:, 1], e[:, 0]])
    A = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n)).tocsr()
    deg = np.asarray(A.sum(axis=1)).ravel()
    return A, deg


@dataclass
class TopologyTransfer:
    """Reuse the initial connectivity and relocate the vertices.

    Boundary vertices go to their advected positions. With the default
    ``interior="rigid_blend"`` the ``rigid_layers`` vertex rings around each
    shape follow that shape's own motion (rotation about its centre or
    radial growth) and the remaining interior vertices blend the shape
    motions with harmonic (uniform graph Laplacian) weights, so the thin
    cut cells hugging a shape are carried along instead of crushed.
    ``interior="laplacian"`` is the plain harmonic extension of the
    boundary displacement. Either way a static scene is an exact fixed
    point.
    """

    interior: str = "rigid_blend"
    rigid_layers: int = 2
    rtol: float = 1e-12
    maxiter: int = 20000

    def __post_init__(self):
        if self.interior not in ("laplacian", "rigid_blend"):
            raise InvalidInputError(f"unknown interior motion {self.interior!r}")

    def _harmonic(self, A, deg, fixed, values):
        """Solve ``L u = 0`` on free vertices with ``u = values`` on fixed ones."""
        free = np.nonzero(~fixed)[0]
        out = np.array(values, float, copy=True)
        if len(free) == 0:
            return out
        Aff = A[free][:, free]
        L = (coo_matrix((deg[free], (np.arange(len(free)), np.arange(len(free)))),
                        shape=(len(free), len(free))).tocsr() - Aff)
        rhs = A[free][:, np.nonzero(fixed)[0]] @ values[fixed]
        rhs = np.atleast_2d(rhs.T).T if rhs.ndim == 1 else rhs
        M = coo_matrix((1.0 / deg[free], (np.arange(len(free)), np.arange(len(free)))),
                       shape=(len(free), len(free))).tocsr()
        sol = np.zeros((len(free), rhs.shape[1]))
        for j in range(rhs.shape[1]):
            b = rhs[:, j]
            if not np.any(b):
                continue
            x, info = cg(L, b, rtol=self.rtol, atol=0.0, maxiter=self.maxiter, M=M)
            if info != 0:
                raise TanglingError(f"harmonic solve did not converge (info={info})")
            sol[:, j] = x
        out[free] = sol if out.ndim > 1 else sol[:, 0]
        return out

    def _blend(self, A, deg, initial, X0, scene, t_n, t_np1):
        n = len(X0)
        tag = initial.vertex_tag
        interior = tag == int(VertexTag.INTERIOR)
        # graph distance (in rings) from each shape, owner of the closest one
        ring = np.full(n, np.iinfo(np.int32).max, np.int64)
        near = np.full(n, -1, np.int64)
        for k in range(len(scene.shapes)):
            front = (tag == int(VertexTag.OBJECT_BOUNDARY)) & (initial.owner == k)
            reached = front.copy()
            for depth in range(self.rigid_layers + 1):
                upd = front & (depth < ring)
                ring[upd] = depth
                near[upd] = k
                front = (A @ front.astype(float) > 0) & ~reached
                reached |= front
        clamped = interior & (near >= 0) & (ring <= self.rigid_layers)
        fixed = ~interior | clamped
        disp = np.zeros((n, 3))
        for k, shape in enumerate(scene.shapes):
            w0 = (((tag == int(VertexTag.OBJECT_BOUNDARY)) & (initial.owner == k))
                  | (clamped & (near == k))).astype(float)
            w = self._harmonic(A, deg, fixed, w0)
            sel = np.nonzero(interior & (w > 0))[0]
            y = X0[sel] - shape.center
            if shape.is_ellipsoid:
                disp[sel] += _rotate_many(y, shape.angular_velocity, w[sel] * (t_np1 - t_n)) - y
            else:
                r = np.maximum(np.linalg.norm(y, axis=1), 1e-300)
                dr = shape.radius_at(t_np1) - shape.radius_at(t_n)
                disp[sel] += (w[sel] * dr / r)[:, None] * y
        return disp

    def __call__(self, initial: SimplicialMesh, boundary_positions: np.ndarray, t_np1: float,
                 scene: MovingScene, t_n: float):
        X0 = initial.vertices[:, :3]
        T = initial.cells
        n = len(X0)
        fixed = initial.vertex_tag != int(VertexTag.INTERIOR)
        D = np.zeros((n, 3))
        D[fixed] = boundary_positions[fixed] - X0[fixed]
        A, deg = _laplacian(T, n)
        if not np.any(D):
            X1 = X0.copy()
        elif self.interior == "laplacian":
            X1 = X0 + self._harmonic(A, deg, fixed, D)
        else:
            X1 = X0 + self._blend(A, deg, initial, X0, scene, t_n, t_np1)
            X1[fixed] = boundary_positions[fixed]
        vol = _signed_volumes(X1, T)
        bad = np.nonzero(vol <= 0)[0]
        if len(bad):
            raise TanglingError(
                f"{len(bad)} tetrahedra inverted on the terminating hyperplane at t={t_np1:g}; "
                "use a smaller h_time", cells=bad[:100].tolist())
        V4 = np.column_stack([X1, np.full(n, float(t_np1))])
        return initial.replace(vertices=V4, patch=np.full(len(T), int(Patch.TERMINATING), np.int8)), \
            np.arange(n)


def _rotate_many(Y, omega, angle_scale):
    """Rotate each row of ``Y`` about ``omega`` by ``|omega| * angle_scale``."""
    w = np.asarray(omega, float)
    wn = np.linalg.norm(w)
    if wn == 0:
        return Y.copy()
    k = w / wn
    th = wn * angle_scale
    c, s = np.cos(th)[:, None], np.sin(th)[:, None]
    kxy = np.cross(k, Y)
    kdy = (Y @ k)[:, None]
    return Y * c + kxy * s + k[None] * kdy * (1 - c)


def _signed_volumes(X, T):
    a, b, c, d = (X[T[:, i]] for i in range(4))
    return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a) / 6.0


class ShellMesher:
    """Terminating-hyperplane meshers that re-mesh the advected boundary
    shell. Subclasses implement :meth:`mesh_shell`, which must keep every
    shell vertex and every shell triangle."""

    match_tol: float = 1e-9

    def mesh_shell(self, points, faces, holes):
        """Return ``(X, T)``: vertices and tetrahedra filling the shell."""
        raise NotImplementedError

    def __call__(self, initial: SimplicialMesh, boundary_positions: np.ndarray, t_np1: float,
                 scene: MovingScene, t_n: float):
        tris, _ = extract_boundary_triangles(initial)
        shell_v = np.unique(tris)
        local = np.full(initial.n_vertices, -1, np.int64)
        local[shell_v] = np.arange(len(shell_v))
        P = boundary_positions[shell_v, :3]
        F = local[tris]
        holes = np.array([s.center for s in scene.shapes], float).reshape(-1, 3)
        X, T = self.mesh_shell(P, F, holes)
        X = np.array(X, float)
        T = np.array(T, np.int64)
        if T.ndim != 2 or T.shape[1] != 4 or X.ndim != 2 or X.shape[1] != 3:
            raise ExternalMesherError("volume mesher must return tetrahedra in 3D")
        scale = scene.box.diagonal
        if len(X) >= len(P) and np.array_equal(X[:len(P)], P):
            idx = np.arange(len(P))
        else:
            d, idx = cKDTree(X).query(P)
            miss = int(np.sum(d > self.match_tol * scale))
            if miss:
                raise ExternalMesherError(f"{miss} shell vertices missing from the volume mesh")
            X[idx] = P
        v = _signed_volumes(X, T)
        if np.any(v == 0):
            raise ExternalMesherError("volume mesher returned degenerate tetrahedra")
        T[v < 0] = T[v < 0][:, [1, 0, 2, 3]]
        tag = np.full(len(X), int(VertexTag.INTERIOR), np.int8)
        own = np.full(len(X), -1, np.int32)
        tag[idx] = initial.vertex_tag[shell_v]
        own[idx] = initial.owner[shell_v]
        out = SimplicialMesh(np.column_stack([X, np.full(len(X), float(t_np1))]), T, tag,
                             np.full(len(T), int(Patch.TERMINATING), np.int8), own)
        try:
            got, _ = extract_boundary_triangles(out)
        except InvalidMeshError as exc:
            raise ExternalMesherError(f"invalid volume mesh: {exc}") from exc
        want = np.unique(np.sort(idx[F], axis=1), axis=0)
        if not np.array_equal(np.unique(np.sort(got, axis=1), axis=0), want):
            raise ExternalMesherError("volume mesh boundary does not match the shell")
        vertex_map = np.full(initial.n_vertices, -1, np.int64)
        vertex_map[shell_v] = idx
        return out, vertex_map


@dataclass
class ExternalMesher(ShellMesher):
    """Mesh the terminating hyperplane with an external volume mesher.

    The advected boundary shell is written as ``.stmesh`` (embedding 3,
    triangle cells) with a ``<in>.holes`` sidecar listing one seed point
    per line inside each shape. ``command`` is a template with ``{in}`` and
    ``{out}`` placeholders; the command must write a ``.stmesh`` tet mesh
    containing every shell vertex and triangle.
    """

    command: str
    workdir: str | None = None
    timeout: float | None = None
    match_tol: float = 1e-9

    def mesh_shell(self, points, faces, holes):
        from .io_formats import read_stmesh, write_stmesh
        shell = SimplicialMesh(points, faces)
        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            src = os.path.join(tmp, "shell.stmesh")
            dst = os.path.join(tmp, "volume.stmesh")
            write_stmesh(shell, src)
            np.savetxt(src + ".holes", holes, fmt="%.17g")
            cmd = self.command.replace("{in}", shlex.quote(src)).replace("{out}", shlex.quote(dst))
            try:
                res = subprocess.run(cmd, shell=True, capture_output=True, text=True,
                                     timeout=self.timeout)
            except subprocess.TimeoutExpired as exc:
                raise ExternalMesherError(f"external mesher timed out: {cmd}") from exc
            if res.returncode != 0:
                raise ExternalMesherError(
                    f"external mesher exited with {res.returncode}: {res.stderr.strip()[:500]}")
            if not os.path.exists(dst):
                raise ExternalMesherError("external mesher produced no output file")
            vol = read_stmesh(dst)
        if vol.dim_cell != 3 or vol.dim_embed != 3:
            raise ExternalMesherError("external mesher must return tetrahedra in 3D")
        return vol.vertices, vol.cells


@contextlib.contextmanager
def _quiet_stdout():
    """Silence C-level writes to stdout (the tetgen wrapper prints status lines)."""
    libc = ctypes.CDLL(None)
    sys.stdout.flush()
    fd = 1
    saved = os.dup(fd)
    try:
        with open(os.devnull, "w") as null:
            os.dup2(null.fileno(), fd)
            try:
                yield
            finally:
                libc.fflush(None)  # C stdio buffers must reach devnull, not the restored fd
    finally:
        os.dup2(saved, fd)
        os.close(saved)


def regular_tet_volume(h: float) -> float:
    return h ** 3 / (6.0 * np.sqrt(2.0))


@dataclass
class TetGenMesher(ShellMesher):
    """In-process TetGen run on the shell, boundary preserved (``-Y``).

    ``h`` caps the interior element size at a regular tet of edge ``h``;
    ``radius_edge`` is TetGen's quality bound. Needs the optional
    ``tetgen`` package.
    """

    h: float | None = None
    radius_edge: float = 1.5
    match_tol: float = 1e-9

    def mesh_shell(self, points, faces, holes):
        try:
            import tetgen
        except ImportError as exc:
            raise ExternalMesherError("the tetgen package is not installed "
                                      "(pip install tetgen)") from exc
        tg = tetgen.TetGen(np.ascontiguousarray(points, float),
                           np.ascontiguousarray(faces, np.int32))
        for c in holes:
            tg.add_hole([float(v) for v in c])
        switches = f"pq{self.radius_edge:g}YQ"
        if self.h is not None:
            switches += f"a{regular_tet_volume(self.h):.17g}"
        try:
            with _quiet_stdout():
                nodes, elems, *_ = tg.tetrahedralize(switches=switches)
        except RuntimeError as exc:
            raise ExternalMesherError(f"tetgen failed: {exc}") from exc
        return nodes, elems


def mesh_terminating_hyperplane(initial_mesh: SimplicialMesh, advected_boundary: np.ndarray,
                                scene: MovingScene, t_n: float, t_np1: float, strategy=None):
    """Tet mesh of the terminating hyperplane and the map from initial
    vertex indices to its vertices (-1 for vertices it does not carry)."""
    mesher = TopologyTransfer() if strategy is None else strategy
    return mesher(initial_mesh, advected_boundary, t_np1, scene, t_n)


# ---------------------------------------------------------------------------
# slab assembly


def lateral_quad_census(tets: np.ndarray, keys: np.ndarray, steiner: np.ndarray):
    """Per-prism triangle sets on each lateral quad.

    ``tets`` is ``(P, k, 4)``, ``keys`` the ``(P, 3, 4)`` sorted quad
    corners and ``steiner`` the ``(P, 3)`` face Steiner indices. Returns
    ``(quad_ids, triangles)`` listing, for every prism and quad, the
    sorted triangles of that prism lying on the quad.
    """
    P, k, _ = tets.shape
    faces = tets[:, :, _TET_FACES].reshape(P, k * 4, 3)
    faces = np.sort(faces, axis=2)
    rows_q, rows_t = [], []
    for q in range(3):
        allowed = np.concatenate([keys[:, q], steiner[:, q:q + 1]], axis=1)  # (P, 5)
        inside = np.all(np.any(faces[:, :, :, None] == allowed[:, None, None, :], axis=3), axis=2)
        pi, fi = np.nonzero(inside)
        rows_q.append(np.column_stack([pi, np.full(len(pi), q)]))
        rows_t.append(faces[pi, fi])
    return np.concatenate(rows_q), np.concatenate(rows_t)


def check_lateral_conformity(tets, keys, steiner):
    """Both prisms on every lateral quad must contribute the same four
    triangles; raises :class:`ConformityError` otherwise."""
    qi, tri = lateral_quad_census(tets, keys, steiner)
    sid = steiner[qi[:, 0], qi[:, 1]]
    # every (Steiner, triangle) pair must appear exactly twice: once per prism
    rec = np.column_stack([sid, tri])
    _, counts = np.unique(rec, axis=0, return_counts=True)
    per_prism = np.bincount(qi[:, 0] * 3 + qi[:, 1], minlength=len(tets) * 3)
    if np.any(per_prism != 4):
        raise ConformityError(f"{int(np.sum(per_prism != 4))} prism quads without four triangles")
    if np.any(counts != 2):
        raise ConformityError(f"{int(np.sum(counts != 2))} lateral triangles not shared by two prisms")
    return len(np.unique(sid))


def _orient_prisms(coords4, tets, outward):
    """Flip whole prisms whose summed normal points against ``outward``."""
    P, k, _ = tets.shape
    V = coords4[tets.reshape(-1, 4)]
    E = np.stack([V[:, 1] - V[:, 0], V[:, 2] - V[:, 0], V[:, 3] - V[:, 0]], axis=1)
    n = generalized_cross(E).reshape(P, k, 4).sum(axis=1)
    s = np.einsum("ij,ij->i", n, outward)
    flip = s < 0
    tets = tets.copy()
    tets[flip] = tets[flip][:, :, [1, 0, 2, 3]]
    return tets


def _check_folds(coords4, tets):
    """Every tet of a prism must face the same side as the whole prism;
    a folded split would be counted twice by the unsigned measure."""
    P, k, _ = tets.shape
    V = coords4[tets.reshape(-1, 4)]
    E = np.stack([V[:, 1] - V[:, 0], V[:, 2] - V[:, 0], V[:, 3] - V[:, 0]], axis=1)
    n = generalized_cross(E).reshape(P, k, 4)
    dots = np.einsum("pkd,pd->pk", n, n.sum(axis=1))
    bad = np.nonzero(np.any(dots <= 0, axis=1))[0]
    if len(bad):
        raise DegenerateSplitError(f"{len(bad)} prisms split into folded tetrahedra, e.g. prism "
                                   f"{int(bad[0])}; reduce the slab duration", prism=int(bad[0]))


def build_slab_3d(prev_terminating: SimplicialMesh, scene: MovingScene, t_n: float,
                  t_np1: float, cfg: SlabConfig) -> Slab:
    """Closed tetrahedral hull of the slab ``[t_n, t_np1]``."""
    if not t_np1 > t_n:
        raise InvalidInputError(f"slab end {t_np1} must exceed its start {t_n}")
    if np.any(np.abs(prev_terminating.vertices[:, 3] - t_n) > 1e-12 * max(1.0, abs(t_n))):
        raise InvalidInputError("previous terminating mesh does not lie on t = t_n")
    initial = prev_terminating.with_patch(Patch.INITIAL)
    n = initial.n_vertices
    tris, owners = extract_boundary_triangles(initial)
    X0 = initial.vertices[:, :3]
    bv = np.unique(tris)
    X1 = X0.copy()
    X1[bv] = advect_vertices(X0[bv], initial.vertex_tag[bv], initial.owner[bv], scene,
                             t_n, t_np1, cfg.trajectory)
    terminating, vmap = mesh_terminating_hyperplane(initial, X1, scene, t_n, t_np1, cfg.terminating)
    # global numbering: initial [0, n), terminating [n, n + m), Steiner points after
    m = terminating.n_vertices
    coords = np.concatenate([initial.vertices, terminating.vertices])
    bottom = tris
    top = n + vmap[tris]
    if np.any(vmap[tris] < 0):
        raise ConformityError("terminating mesh lacks advected shell vertices")
    h_ref = min(cfg.h_box, cfg.h_shape)
    A0 = _tri_areas(coords[bottom])
    A1 = _tri_areas(coords[top])
    bad = np.nonzero((A0 < 1e-12 * h_ref ** 2) | (A1 < 1e-12 * h_ref ** 2))[0]
    if len(bad):
        raise DegenerateSplitError(f"prism {int(bad[0])} has a degenerate cap", prism=int(bad[0]))
    registry = FaceSteinerRegistry(coords)
    tets = split_prisms(bottom, top, registry, cfg.strategy)
    all_coords = np.concatenate([coords, registry.all_points()])
    # outward direction in space-time: outward face normal of the bottom triangle
    a, b, c = (X0[tris[:, i]] for i in range(3))
    ns = np.cross(b - a, c - a)
    outward = np.column_stack([ns, np.zeros(len(ns))])
    tets = _orient_prisms(all_coords, tets, outward)
    _check_split(all_coords, tets, np.arange(len(tets)), h_ref)
    _check_folds(all_coords, tets)
    if cfg.check_conformity:
        keys = FaceSteinerRegistry.quad_keys(bottom, top)
        steiner = _steiner_of(registry, keys)
        n_quads = check_lateral_conformity(tets, keys, steiner)
    else:
        n_quads = len(registry.keys)
    nc = len(all_coords)
    tag = np.full(nc, int(VertexTag.INTERIOR), np.int8)
    own = np.full(nc, -1, np.int32)
    tag[:n] = initial.vertex_tag
    own[:n] = initial.owner
    tag[n:n + m] = terminating.vertex_tag
    own[n:n + m] = terminating.owner
    # Steiner points live on the lateral boundary of their surface
    q_owner = _quad_owner(registry.keys, tag, own)
    s_tag = np.where(q_owner < 0, int(VertexTag.BOX_BOUNDARY), int(VertexTag.OBJECT_BOUNDARY))
    tag[n + m:n + m + len(registry.keys)] = s_tag
    own[n + m:n + m + len(registry.keys)] = np.where(q_owner < 0, -1, q_owner)
    if len(registry.centroid_points):
        ctag = np.where(owners < 0, int(VertexTag.BOX_BOUNDARY), int(VertexTag.OBJECT_BOUNDARY))
        tag[n + m + len(registry.keys):] = ctag
        own[n + m + len(registry.keys):] = owners
    lat_cells = tets.reshape(-1, 4)
    used = np.zeros(nc, bool)
    used[lat_cells.ravel()] = True
    remap = np.cumsum(used) - 1
    intermediate = SimplicialMesh(all_coords[used], remap[lat_cells], tag[used],
                                  np.full(len(lat_cells), int(Patch.INTERMEDIATE), np.int8), own[used])
    tol = cfg.tol_for(scene)
    hull = merge_and_synchronize([reversed_cells(initial), intermediate, terminating], tol)
    report = hull_closure_check(hull)
    if not report.closed or report.messages:
        raise ClosureError(f"slab [{t_n}, {t_np1}] hull not closed: {report.summary()} {report.messages}",
                           report)
    info = {"prisms": len(tris), "tets_per_prism": tets.shape[1], "lateral_quads": n_quads,
            "box_triangles": int(np.sum(owners < 0)), "shape_triangles": int(np.sum(owners >= 0))}
    return Slab(t_n, t_np1, initial, intermediate, terminating, hull, report, info)


def _steiner_of(registry, keys):
    flat = keys.reshape(-1, 4)
    K = registry.keys
    # rows of K are sorted lexicographically by np.unique
    view_dtype = np.dtype((np.void, K.dtype.itemsize * 4))
    Kv = np.ascontiguousarray(K).view(view_dtype).ravel()
    Fv = np.ascontiguousarray(flat).view(view_dtype).ravel()
    order = np.argsort(Kv)
    pos = order[np.searchsorted(Kv[order], Fv)]
    return (registry.base + pos).reshape(keys.shape[:2])


def _quad_owner(keys, tag, own):
    o = own[keys]
    t = tag[keys]
    box = np.all(t == int(VertexTag.BOX_BOUNDARY), axis=1)
    return np.where(box, -1, o.max(axis=1))


def _tri_areas(P):
    a, b, c = P[:, 0], P[:, 1], P[:, 2]
    u, v = b - a, c - a
    uu = np.einsum("ij,ij->i", u, u)
    vv = np.einsum("ij,ij->i", v, v)
    uv = np.einsum("ij,ij->i", u, v)
    return 0.5 * np.sqrt(np.maximum(uu * vv - uv * uv, 0.0))


def run_slabs_3d(scene: MovingScene, cfg: SlabConfig, times, initial: SimplicialMesh | None = None) -> list:
    from .hypermesh import generate_initial_hypermesh
    times = list(map(float, times))
    current = initial if initial is not None else generate_initial_hypermesh(
        scene, cfg.h_box, cfg.h_shape, times[0])
    slabs = []
    for k, (t_n, t_np1) in enumerate(zip(times[:-1], times[1:])):
        try:
            slab = build_slab_3d(current, scene, t_n, t_np1, cfg)
        except StSlabError as exc:
            exc.slab = k
            raise
        slabs.append(slab)
        current = slab.terminating
    return slabs
