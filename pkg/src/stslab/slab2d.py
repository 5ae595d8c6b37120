"""Closed triangle hulls of 2D+t space-time slabs.

One slab is built from the terminating plane mesh of the previous slab:

1. copy it as the initial plane at ``t_n``;
2. extract its boundary loops and advect their vertices to ``t_np1``;
3. join each boundary edge to its advected image, giving a ruled
   quadrilateral that is split into four triangles through its centroid;
4. triangulate the terminating plane inside the advected loops;
5. merge the three pieces into one closed hull.

The first slab starts from a plane mesh generated at ``t0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cdt2d import PlanarInput, mesh_domain
from .errors import ClosureError, InvalidInputError, InvalidMeshError, PipelineError, StSlabError
from .geom_core import (Patch, SimplicialMesh, VertexTag, hull_closure_check,
                        merge_and_synchronize)
from .kinematics import MovingScene, ShapeKind
from .slab import Slab, SlabConfig, compact, lift, reversed_cells
from .trajectory import advect_vertices


@dataclass
class BoundaryLoop:
    """Closed boundary loop; ``vertices`` run with the domain on the left.
    ``owner`` is the shape index, or -1 for the box."""

    vertices: np.ndarray
    owner: int

    @property
    def is_box(self) -> bool:
        return self.owner < 0


def circle_vertex_count(radius: float, h: float) -> int:
    return max(16, int(math.ceil(2 * math.pi * radius / h)))


def circle_polygon(shape, t: float, h: float) -> np.ndarray:
    """Regular polygon inscribed in the circle at time ``t``, counter-clockwise."""
    R = shape.radius_at(t)
    n = circle_vertex_count(R, h)
    th = 2 * math.pi * np.arange(n) / n
    return shape.center + R * np.column_stack([np.cos(th), np.sin(th)])


def box_polygon(box, h: float) -> np.ndarray:
    """Counter-clockwise box outline with sides split into pieces no longer than ``h``."""
    (x0, y0), (x1, y1) = box.lower, box.upper
    nx = max(1, int(math.ceil((x1 - x0) / h - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / h - 1e-9)))
    sx = np.linspace(x0, x1, nx + 1)[:-1]
    sy = np.linspace(y0, y1, ny + 1)[:-1]
    return np.concatenate([
        np.column_stack([sx, np.full(nx, y0)]),
        np.column_stack([np.full(ny, x1), sy]),
        np.column_stack([x1 + x0 - sx, np.full(nx, y1)]),
        np.column_stack([np.full(ny, x0), y1 + y0 - sy]),
    ])


def plane_mesh_from_loops(loops, owners, scene: MovingScene, t: float,
                          cfg: SlabConfig) -> SimplicialMesh:
    """Triangulate the plane at ``t`` bounded by the given polygon loops.

    The loop vertices come first in the output, in the given order, and
    are kept verbatim: boundary segments are never split, so the loops
    stay conforming with the lateral surface.
    """
    pts, segs, regs, tags, own = [], [], [], [], []
    off = 0
    holes = []
    for L, k in zip(loops, owners):
        n = len(L)
        pts.append(L[:, :2])
        idx = off + np.arange(n)
        segs.append(np.column_stack([idx, np.roll(idx, -1)]))
        region = "box" if k < 0 else "shape"
        regs += [region] * n
        tags.append(np.full(n, int(VertexTag.BOX_BOUNDARY if k < 0 else VertexTag.OBJECT_BOUNDARY)))
        own.append(np.full(n, k))
        if k >= 0:
            holes.append(scene.shapes[k].center)
        off += n
    pin = PlanarInput(np.concatenate(pts), np.concatenate(segs), np.array(holes).reshape(-1, 2),
                      {"box": cfg.h_box, "shape": cfg.h_shape}, regs)
    pm = mesh_domain(pin, split_segments=False, min_angle=cfg.min_angle,
                     engine=cfg.engine, seed=cfg.seed)
    n_out = len(pm.points)
    tag = np.full(n_out, int(VertexTag.INTERIOR), np.int8)
    owner = np.full(n_out, -1, np.int32)
    tag[:off] = np.concatenate(tags)
    owner[:off] = np.concatenate(own)
    if n_out and not np.array_equal(pm.points[:off], pin.points):
        raise PipelineError("plane mesher moved boundary vertices")
    mesh = SimplicialMesh(lift(pm.points, t), pm.triangles, tag,
                          np.full(len(pm.triangles), int(Patch.TERMINATING), np.int8), owner)
    return compact(mesh)


def generate_initial_plane_2d(scene: MovingScene, cfg: SlabConfig, t: float | None = None) -> SimplicialMesh:
    """Plane mesh of the scene at ``t`` (default ``t0``); the ghost slab's terminating mesh."""
    t = scene.t0 if t is None else t
    loops = [box_polygon(scene.box, cfg.h_box)]
    owners = [-1]
    for k, s in enumerate(scene.shapes):
        if s.kind is not ShapeKind.CIRCLE:
            raise InvalidInputError("2D scenes hold circles only")
        loops.append(circle_polygon(s, t, cfg.h_shape))
        owners.append(k)
    return plane_mesh_from_loops(loops, owners, scene, t, cfg)


def _planar_orientation(mesh: SimplicialMesh) -> np.ndarray:
    P = mesh.vertices[:, :2]
    A, B, C = (P[mesh.cells[:, i]] for i in range(3))
    return (B[:, 0] - A[:, 0]) * (C[:, 1] - A[:, 1]) - (B[:, 1] - A[:, 1]) * (C[:, 0] - A[:, 0])


def extract_boundary_edges(mesh: SimplicialMesh):
    """Boundary edges of a plane triangle mesh and their loops.

    Returns ``(edges, loops)``: directed edges with the domain on the left
    and a list of :class:`BoundaryLoop`. A closed surface gives no edges.
    """
    cells = mesh.cells.copy()
    if len(cells) == 0:
        return np.zeros((0, 2), np.int64), []
    neg = _planar_orientation(mesh) < 0
    cells[neg] = cells[neg][:, [0, 2, 1]]
    half = np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]])
    und = np.sort(half, axis=1)
    _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts > 2):
        raise InvalidMeshError(f"{int(np.sum(counts > 2))} non-manifold edges")
    edges = half[counts[inv] == 1]
    if len(edges) == 0:
        return edges, []
    nxt = {}
    for a, b in edges.tolist():
        if a in nxt:
            raise InvalidMeshError(f"boundary vertex {a} has two outgoing edges")
        nxt[a] = b
    seen = set()
    loops = []
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        v = nxt[start]
        while v != start:
            if v in seen or v not in nxt:
                raise InvalidMeshError("boundary edges do not form closed loops")
            loop.append(v)
            seen.add(v)
            v = nxt[v]
        loop = np.array(loop, np.int64)
        tags = mesh.vertex_tag[loop]
        owners = mesh.owner[loop]
        if np.all(tags == int(VertexTag.BOX_BOUNDARY)):
            owner = -1
        elif np.all(tags == int(VertexTag.OBJECT_BOUNDARY)) and len(set(owners.tolist())) == 1:
            owner = int(owners[0])
        else:
            raise InvalidMeshError(f"boundary loop starting at vertex {start} mixes surfaces")
        loops.append(BoundaryLoop(loop, owner))
    return edges, loops


def loop_signed_area(X: np.ndarray) -> float:
    x, y = X[:, 0], X[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def build_intermediate_2d(initial_loops, final_loops, tags=None, owners=None,
                          closed: bool = True) -> SimplicialMesh:
    """Lateral surface between matched vertex loops.

    ``initial_loops[i]`` and ``final_loops[i]`` are ``(k, 3)`` arrays of
    space-time points with row correspondence. Each edge ``(a, b)`` and
    its image span the quad ``(a0, b0, b1, a1)``, split into four
    triangles through the quad centroid and oriented outward from the
    slab when the loops run with the domain on the left.
    """
    if len(initial_loops) != len(final_loops):
        raise PipelineError("different numbers of initial and final loops")
    verts, cells, vtag, vown = [], [], [], []
    off = 0
    for li, (A, B) in enumerate(zip(initial_loops, final_loops)):
        A = np.asarray(A, float)
        B = np.asarray(B, float)
        if A.shape != B.shape:
            raise PipelineError(f"loop {li}: {len(A)} initial vs {len(B)} final vertices")
        k = len(A)
        i = np.arange(k)
        j = (i + 1) % k
        if not closed:
            i, j = i[:-1], j[:-1]
        S = 0.25 * (A[i] + A[j] + B[j] + B[i])
        _check_quads(A[i], A[j], B[j], B[i], S, li)
        a0, b0 = off + i, off + j
        a1, b1 = off + k + i, off + k + j
        s = off + 2 * k + np.arange(len(i))
        cells.append(np.stack([np.column_stack([a0, b0, s]), np.column_stack([b0, b1, s]),
                               np.column_stack([b1, a1, s]), np.column_stack([a1, a0, s])],
                              axis=1).reshape(-1, 3))
        verts += [A, B, S]
        tg = int(VertexTag.OBJECT_BOUNDARY) if tags is None else int(tags[li])
        ow = -1 if owners is None else int(owners[li])
        vtag.append(np.full(2 * k + len(i), tg))
        vown.append(np.full(2 * k + len(i), ow))
        off += 2 * k + len(i)
    if not verts:
        return SimplicialMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
    cells = np.concatenate(cells)
    return SimplicialMesh(np.concatenate(verts), cells, np.concatenate(vtag),
                          np.full(len(cells), int(Patch.INTERMEDIATE), np.int8),
                          np.concatenate(vown))


def _check_quads(P0, P1, P2, P3, S, loop_index):
    """Every centroid must see the four quad edges with one orientation."""
    corners = [P0, P1, P2, P3]
    normals = [np.cross(corners[(q + 1) % 4] - corners[q], S - corners[q]) for q in range(4)]
    ref = sum(normals)
    scale = np.einsum("ij,ij->i", ref, ref)
    for q, nq in enumerate(normals):
        dots = np.einsum("ij,ij->i", nq, ref)
        bad = np.nonzero(dots <= 1e-12 * scale)[0]
        if len(bad):
            raise PipelineError(
                f"loop {loop_index}: quad {int(bad[0])} is not convex around its centroid; "
                "reduce the slab duration")


def build_slab_2d(prev_terminating: SimplicialMesh, scene: MovingScene, t_n: float,
                  t_np1: float, cfg: SlabConfig) -> Slab:
    """Closed triangle hull of the slab ``[t_n, t_np1]``."""
    if not t_np1 > t_n:
        raise InvalidInputError(f"slab end {t_np1} must exceed its start {t_n}")
    tt = prev_terminating.vertices[:, 2]
    if np.any(np.abs(tt - t_n) > 1e-12 * max(1.0, abs(t_n))):
        raise InvalidInputError("previous terminating mesh does not lie on the plane t = t_n")
    initial = prev_terminating.with_patch(Patch.INITIAL)
    _, loops = extract_boundary_edges(initial)
    X0 = initial.vertices[:, :2]
    idx = np.concatenate([L.vertices for L in loops])
    X1 = X0.copy()
    X1[idx] = advect_vertices(X0[idx], initial.vertex_tag[idx], initial.owner[idx],
                              scene, t_n, t_np1, cfg.trajectory)
    bottoms = [initial.vertices[L.vertices] for L in loops]
    tops = [lift(X1[L.vertices], t_np1) for L in loops]
    tags = [int(VertexTag.BOX_BOUNDARY if L.is_box else VertexTag.OBJECT_BOUNDARY) for L in loops]
    owners = [L.owner for L in loops]
    intermediate = build_intermediate_2d(bottoms, tops, tags, owners)
    term_loops = [X1[L.vertices] for L in loops]
    terminating = plane_mesh_from_loops(term_loops, owners, scene, t_np1, cfg)
    tol = cfg.tol_for(scene)
    hull = merge_and_synchronize([reversed_cells(initial), intermediate, terminating], tol)
    report = hull_closure_check(hull)
    if not report.closed:
        raise ClosureError(f"slab [{t_n}, {t_np1}] hull not closed: {report.summary()}", report)
    return Slab(t_n, t_np1, initial, intermediate, terminating, hull, report,
                {"loops": len(loops), "quads": sum(len(L.vertices) for L in loops)})


def run_slabs_2d(scene: MovingScene, cfg: SlabConfig, times, initial: SimplicialMesh | None = None) -> list:
    """Build consecutive slabs over the breakpoints ``times``; ``initial``
    replaces the generated first plane mesh."""
    times = list(map(float, times))
    current = initial if initial is not None else generate_initial_plane_2d(scene, cfg, times[0])
    slabs = []
    for k, (t_n, t_np1) in enumerate(zip(times[:-1], times[1:])):
        try:
            slab = build_slab_2d(current, scene, t_n, t_np1, cfg)
        except StSlabError as exc:
            exc.slab = k
            raise
        slabs.append(slab)
        current = slab.terminating
    return slabs
