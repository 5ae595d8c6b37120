"""Planar constrained Delaunay triangulation and sizing-driven refinement.

Two engines build the unconstrained Delaunay triangulation:

* ``"bowyer_watson"`` -- incremental insertion written here, with the
  symbolic tie-break from :mod:`stslab.predicates`, so its output is the
  unique Delaunay triangulation of the perturbed point set;
* ``"qhull"`` -- :class:`scipy.spatial.Delaunay`, used for large inputs.

Both are followed by the same segment recovery (edge flips), Lawson
legalisation of unconstrained edges and flood-fill removal of holes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, cKDTree

from .errors import InvalidInputError, RefinementError, SegmentIntersectionError
from .predicates import incircle_many, incircle_sos, orient2d, orient2d_many

log = logging.getLogger(__name__)

INF = -1
AUTO_ENGINE_LIMIT = 3000
DUPLICATE_TOL = 1e-12
DELAUNAY_TOL = 1e-12


@dataclass
class PlanarInput:
    """Points, constrained segments, hole seeds and per-region target sizes.

    ``segment_region[i]`` names the region segment ``i`` bounds; ``sizing``
    maps region names to target edge lengths.
    """

    points: np.ndarray
    segments: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    holes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    sizing: dict = field(default_factory=dict)
    segment_region: list | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.segments = np.asarray(self.segments, dtype=np.int64).reshape(-1, 2)
        self.holes = np.asarray(self.holes, dtype=float).reshape(-1, 2)
        if self.segment_region is None:
            self.segment_region = ["default"] * len(self.segments)
        self.segment_region = list(self.segment_region)

    def dumps(self) -> str:
        """Plain-text dump, one record per line, for reproducing failures."""
        lines = [f"# planar input: {len(self.points)} points, {len(self.segments)} segments"]
        for p in self.points:
            lines.append(f"p {float(p[0])!r} {float(p[1])!r}")
        for (a, b), r in zip(self.segments, self.segment_region):
            lines.append(f"s {a} {b} {r}")
        for h in self.holes:
            lines.append(f"h {float(h[0])!r} {float(h[1])!r}")
        for k, v in sorted(self.sizing.items()):
            lines.append(f"z {k} {float(v)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PlanarInput":
        pts, segs, regs, holes, sizing = [], [], [], [], {}
        for raw in text.splitlines():
            tok = raw.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "p":
                pts.append((float(tok[1]), float(tok[2])))
            elif tok[0] == "s":
                segs.append((int(tok[1]), int(tok[2])))
                regs.append(tok[3] if len(tok) > 3 else "default")
            elif tok[0] == "h":
                holes.append((float(tok[1]), float(tok[2])))
            elif tok[0] == "z":
                sizing[tok[1]] = float(tok[2])
        return cls(np.array(pts), np.array(segs, np.int64).reshape(-1, 2),
                   np.array(holes).reshape(-1, 2), sizing, regs)


@dataclass
class PlanarMesh:
    """Counter-clockwise triangles over ``points``.

    The first ``n_input`` points are the input points in input order.
    ``segments`` are the constrained edges, subdivided where refinement
    split them.
    """

    points: np.ndarray
    triangles: np.ndarray
    segments: np.ndarray
    n_input: int
    segment_region: list = field(default_factory=list)
    rejected: int = 0

    def edges(self) -> np.ndarray:
        T = self.triangles
        e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)


# ---------------------------------------------------------------------------
# mutable triangulation used by Bowyer-Watson and segment recovery


class _Triangulation:
    """Triangles with neighbour links; ``N[t][i]`` is opposite ``V[t][i]``."""

    def __init__(self, pts):
        self.P = pts
        self.V: list[list[int]] = []
        self.N: list[list[int]] = []
        self.alive: list[bool] = []
        self.vtri: dict[int, int] = {}

    @classmethod
    def from_arrays(cls, pts, tris, nbrs):
        tr = cls(pts)
        tr.V = [list(map(int, t)) for t in tris]
        tr.N = [list(map(int, n)) for n in nbrs]
        tr.alive = [True] * len(tr.V)
        for t, vs in enumerate(tr.V):
            for v in vs:
                tr.vtri[v] = t
        return tr

    def add(self, v, n):
        self.V.append(list(v))
        self.N.append(list(n))
        self.alive.append(True)
        t = len(self.V) - 1
        for x in v:
            if x != INF:
                self.vtri[x] = t
        return t

    def is_infinite(self, t):
        return INF in self.V[t]

    def p(self, i):
        return self.P[i]

    def finite_arrays(self):
        keep = [t for t in range(len(self.V)) if self.alive[t] and not self.is_infinite(t)]
        index = {t: k for k, t in enumerate(keep)}
        T = np.array([self.V[t] for t in keep], dtype=np.int64).reshape(-1, 3)
        N = np.array([[index.get(n, -1) for n in self.N[t]] for t in keep],
                     dtype=np.int64).reshape(-1, 3)
        return T, N

    # -- Bowyer-Watson --------------------------------------------------------

    def conflict(self, t, ip):
        a, b, c = self.V[t]
        p = self.P[ip]
        if INF not in (a, b, c):
            return incircle_sos(self.P[a], self.P[b], self.P[c], p, a, b, c, ip) > 0
        k = (a, b, c).index(INF)
        u, w = self.V[t][(k + 1) % 3], self.V[t][(k + 2) % 3]
        o = orient2d(self.P[u], self.P[w], p)
        if o > 0:
            return True
        if o < 0:
            return False
        pu, pw = self.P[u], self.P[w]
        dot = (p[0] - pu[0]) * (pw[0] - pu[0]) + (p[1] - pu[1]) * (pw[1] - pu[1])
        len2 = (pw[0] - pu[0]) ** 2 + (pw[1] - pu[1]) ** 2
        return 0 < dot < len2

    def locate(self, ip, start):
        p = self.P[ip]
        t = start
        prev = -1
        for _ in range(4 * len(self.V) + 10):
            if self.is_infinite(t):
                return t
            vs = self.V[t]
            moved = False
            for i in range(3):
                u, w = vs[(i + 1) % 3], vs[(i + 2) % 3]
                nb = self.N[t][i]
                if nb == prev:
                    continue
                if orient2d(self.P[u], self.P[w], p) < 0:
                    prev, t = t, nb
                    moved = True
                    break
            if not moved:
                return t
        # fall back to exhaustive search
        for t in range(len(self.V)):
            if self.alive[t] and self.conflict(t, ip):
                return t
        raise RuntimeError("point location failed")

    def insert(self, ip, hint):
        t0 = self.locate(ip, hint)
        if not self.conflict(t0, ip):
            # located triangle touches ip only on an edge; search neighbours
            for nb in self.N[t0]:
                if self.conflict(nb, ip):
                    t0 = nb
                    break
            else:
                for t in range(len(self.V)):
                    if self.alive[t] and self.conflict(t, ip):
                        t0 = t
                        break
        cavity = {t0}
        stack = [t0]
        while stack:
            t = stack.pop()
            for nb in self.N[t]:
                if nb not in cavity and self.conflict(nb, ip):
                    cavity.add(nb)
                    stack.append(nb)
        boundary = []
        for t in cavity:
            vs = self.V[t]
            for i in range(3):
                nb = self.N[t][i]
                if nb not in cavity:
                    boundary.append((vs[(i + 1) % 3], vs[(i + 2) % 3], nb))
        for t in cavity:
            self.alive[t] = False
        start_at = {}
        end_at = {}
        new = []
        for x, y, outside in boundary:
            t = self.add((x, y, ip), (-1, -1, outside))
            new.append(t)
            start_at[x] = t
            end_at[y] = t
            on = self.N[outside]
            for j in range(3):
                ov = self.V[outside]
                if ov[(j + 1) % 3] == y and ov[(j + 2) % 3] == x:
                    on[j] = t
        for t in new:
            x, y, _ = self.V[t]
            self.N[t][0] = start_at[y]
            self.N[t][1] = end_at[x]
        for t in new:
            if not self.is_infinite(t):
                return t
        return new[0]

    # -- flips ----------------------------------------------------------------

    def flip(self, t, i):
        """Flip the edge opposite ``V[t][i]``; returns the two triangles."""
        V, N = self.V, self.N
        p, u, v = V[t][i], V[t][(i + 1) % 3], V[t][(i + 2) % 3]
        s = N[t][i]
        j = V[s].index(next(x for x in V[s] if x not in (u, v)))
        q = V[s][j]
        A = N[t][(i + 1) % 3]   # edge (v, p)
        B = N[t][(i + 2) % 3]   # edge (p, u)
        # in s = (q, v, u) rotated: find neighbours across (u, q) and (q, v)
        sv = V[s]
        C = D = None
        for k in range(3):
            a, b = sv[(k + 1) % 3], sv[(k + 2) % 3]
            if (a, b) == (u, q):
                C = N[s][k]
            elif (a, b) == (q, v):
                D = N[s][k]
        V[t] = [p, u, q]
        N[t] = [C, s, B]
        V[s] = [p, q, v]
        N[s] = [D, A, t]
        for nb, old, new in ((C, s, t), (A, t, s)):
            if nb is not None and nb >= 0:
                lst = N[nb]
                for k in range(3):
                    if lst[k] == old:
                        lst[k] = new
        self.vtri[p] = t
        self.vtri[u] = t
        self.vtri[q] = s
        self.vtri[v] = s
        return t, s

    def triangles_around(self, a):
        t0 = self.vtri[a]
        out = [t0]
        t = t0
        while True:
            nb = self.N[t][(self.V[t].index(a) + 2) % 3]
            if nb == t0:
                return out
            if nb < 0:
                break
            out.append(nb)
            t = nb
        t = t0
        while True:
            nb = self.N[t][(self.V[t].index(a) + 1) % 3]
            if nb < 0:
                return out
            out.append(nb)
            t = nb

    def find_edge(self, a, b, directed=False):
        """Triangle holding edge ``ab`` and the local index opposite it.
        With ``directed`` only the triangle traversing ``a -> b`` counts."""
        for t in self.triangles_around(a):
            vs = self.V[t]
            if b in vs:
                i = vs.index(a)
                if vs[(i + 1) % 3] == b:
                    return t, (i + 2) % 3
                if not directed:
                    return t, (i + 1) % 3
        return None


def _spatial_order(pts: np.ndarray) -> np.ndarray:
    """Serpentine grid order; shortens point-location walks."""
    n = len(pts)
    if n < 3:
        return np.arange(n)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    k = max(1, int(math.sqrt(n / 2)))
    span = np.maximum(hi - lo, 1e-300)
    gx = np.minimum((k * (pts[:, 0] - lo[0]) / span[0]).astype(int), k - 1)
    gy = np.minimum((k * (pts[:, 1] - lo[1]) / span[1]).astype(int), k - 1)
    xs = np.where(gy % 2 == 0, pts[:, 0], -pts[:, 0])
    return np.lexsort((xs, gy))


def brio_order(points, seed=0):
    """Biased randomised insertion order: random rounds of doubling size,
    each sorted along a serpentine grid."""
    points = np.asarray(points, float)
    n = len(points)
    perm = np.random.default_rng(seed).permutation(n)
    out = []
    lo = 0
    size = 1
    while lo < n:
        chunk = perm[lo:lo + size]
        out.append(chunk[_spatial_order(points[chunk])])
        lo += size
        size *= 2
    return np.concatenate(out) if out else perm


def delaunay_bowyer_watson(points, order=None, seed=0):
    """Incremental Delaunay triangulation; returns ``(triangles, neighbours)``.

    The result does not depend on the insertion order; ``seed`` only
    drives the randomised order used when ``order`` is not given.
    """
    P = [tuple(map(float, p)) for p in np.asarray(points, float)]
    n = len(P)
    if order is None:
        order = brio_order(points, seed)
    order = [int(i) for i in order]
    tr = _Triangulation(P)
    if n < 3:
        return np.zeros((0, 3), np.int64), np.zeros((0, 3), np.int64)
    a = order[0]
    b = next((i for i in order[1:] if P[i] != P[a]), None)
    c = None
    if b is not None:
        for i in order:
            if i not in (a, b) and orient2d(P[a], P[b], P[i]) != 0:
                c = i
                break
    if c is None:
        return np.zeros((0, 3), np.int64), np.zeros((0, 3), np.int64)
    if orient2d(P[a], P[b], P[c]) < 0:
        b, c = c, b
    f = tr.add((a, b, c), (-1, -1, -1))
    g0 = tr.add((c, b, INF), (-1, -1, f))  # opposite c: edge (b, inf)
    g1 = tr.add((a, c, INF), (-1, -1, f))
    g2 = tr.add((b, a, INF), (-1, -1, f))
    tr.N[f] = [g0, g1, g2]
    # infinite triangle (x, y, inf): N[0] opposite x is edge (y, inf)
    tr.N[g0][0] = g2  # edge (b, inf) shared with (b, a, inf)
    tr.N[g0][1] = g1  # edge (inf, c) shared with (a, c, inf)
    tr.N[g1][0] = g0
    tr.N[g1][1] = g2
    tr.N[g2][0] = g1
    tr.N[g2][1] = g0
    hint = f
    for i in order:
        if i in (a, b, c):
            continue
        hint = tr.insert(i, hint)
    return tr.finite_arrays()


def _qhull(points):
    d = Delaunay(points, qhull_options="Qbb Qc Qz Q12 Qt")
    T = d.simplices.astype(np.int64)
    N = d.neighbors.astype(np.int64)
    P = points
    o = orient2d_many(P[T[:, 0]], P[T[:, 1]], P[T[:, 2]])
    neg = o < 0
    T[neg] = T[neg][:, [0, 2, 1]]
    N[neg] = N[neg][:, [0, 2, 1]]
    return T, N


# ---------------------------------------------------------------------------
# constraints


def _edge_keys(a, b, n):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo * n + hi


def _segments_cross(P, segs):
    """Pairs of constraint segments that properly intersect."""
    if len(segs) < 2:
        return []
    A, B = P[segs[:, 0]], P[segs[:, 1]]
    mid = 0.5 * (A + B)
    half = 0.5 * np.linalg.norm(B - A, axis=1)
    pairs = cKDTree(mid).query_pairs(2 * half.max() + 1e-300, output_type="ndarray")
    if len(pairs) == 0:
        return []
    i, j = pairs[:, 0], pairs[:, 1]
    shared = ((segs[i, 0] == segs[j, 0]) | (segs[i, 0] == segs[j, 1])
              | (segs[i, 1] == segs[j, 0]) | (segs[i, 1] == segs[j, 1]))
    i, j = i[~shared], j[~shared]
    o1 = orient2d_many(A[i], B[i], A[j])
    o2 = orient2d_many(A[i], B[i], B[j])
    o3 = orient2d_many(A[j], B[j], A[i])
    o4 = orient2d_many(A[j], B[j], B[i])
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    return [(int(x), int(y)) for x, y in zip(i[hit], j[hit])]


def _recover_segment(tr, a, b, cons):
    """Force edge ``ab`` into ``tr`` by flipping; returns new edges and the
    sub-segments when ``ab`` passes through existing vertices."""
    P = tr.P
    if tr.find_edge(a, b) is not None:
        return [(a, b)], []
    crossing = []
    start = None
    for t in tr.triangles_around(a):
        vs = tr.V[t]
        i = vs.index(a)
        x, y = vs[(i + 1) % 3], vs[(i + 2) % 3]
        ox = orient2d(P[a], P[b], P[x])
        oy = orient2d(P[a], P[b], P[y])
        if ox == 0 and _between(P[a], P[b], P[x]):
            return None, [(a, x), (x, b)]
        if oy == 0 and _between(P[a], P[b], P[y]):
            return None, [(a, y), (y, b)]
        if ox < 0 < oy:
            start = (t, x, y)
            break
    if start is None:
        raise InvalidInputError(f"cannot recover segment ({a}, {b})")
    t, x, y = start
    while True:
        crossing.append((x, y))
        found = tr.find_edge(y, x, directed=True)
        s, j = found
        z = tr.V[s][j]
        if z == b:
            break
        oz = orient2d(P[a], P[b], P[z])
        if oz == 0:
            return None, [(a, z), (z, b)]
        if oz < 0:
            x = z
        else:
            y = z
    new_edges = []
    guard = 0
    while crossing:
        guard += 1
        if guard > 100 * (len(crossing) + 10) ** 2:
            raise InvalidInputError(f"segment recovery stalled on ({a}, {b})")
        u, v = crossing.pop(0)
        if (min(u, v), max(u, v)) in cons:
            raise SegmentIntersectionError(
                f"segment ({a}, {b}) crosses constraint ({u}, {v})", ((a, b), (u, v)))
        t, i = tr.find_edge(u, v)
        p = tr.V[t][i]
        s = tr.N[t][i]
        q = next(x for x in tr.V[s] if x not in (u, v))
        # flip only when the quad (p, u, q, v) is strictly convex
        if orient2d(P[p], P[q], P[u]) < 0 < orient2d(P[p], P[q], P[v]) or \
                orient2d(P[p], P[q], P[u]) > 0 > orient2d(P[p], P[q], P[v]):
            if orient2d(P[u], P[v], P[p]) * orient2d(P[u], P[v], P[q]) < 0:
                tr.flip(t, i)
                op = orient2d(P[a], P[b], P[p])
                oq = orient2d(P[a], P[b], P[q])
                if {p, q} == {a, b} or not (op * oq < 0):
                    new_edges.append((p, q))
                else:
                    crossing.append((p, q))
                continue
        crossing.append((u, v))
    return new_edges, []


def _between(a, b, p):
    dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])
    len2 = (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2
    return 0 < dot < len2


def _legalize(tr, edges, cons):
    P = tr.P
    stack = list(edges)
    guard = 0
    while stack:
        guard += 1
        if guard > 10 * len(tr.V) ** 2 + 100:
            break
        u, v = stack.pop()
        if (min(u, v), max(u, v)) in cons:
            continue
        found = tr.find_edge(u, v)
        if found is None:
            continue
        t, i = found
        s = tr.N[t][i]
        if s < 0:
            continue
        p = tr.V[t][i]
        q = next(x for x in tr.V[s] if x not in (u, v))
        a, b, c = tr.V[t]
        if incircle_sos(P[a], P[b], P[c], P[q], a, b, c, q) > 0:
            tr.flip(t, i)
            stack.extend([(p, u), (u, q), (q, v), (v, p)])


def _merge_duplicates(P):
    tree = cKDTree(P)
    pairs = tree.query_pairs(DUPLICATE_TOL, output_type="ndarray")
    remap = np.arange(len(P))
    if len(pairs):
        log.warning("merging %d near-duplicate input points", len(pairs))
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(P), len(P)))
        _, lab = connected_components(g, directed=False)
        first = np.full(lab.max() + 1, len(P))
        np.minimum.at(first, lab, np.arange(len(P)))
        remap = first[lab]
    return remap


def _choose_engine(engine, n):
    if engine == "auto":
        return "bowyer_watson" if n <= AUTO_ENGINE_LIMIT else "qhull"
    if engine not in ("bowyer_watson", "qhull"):
        raise InvalidInputError(f"unknown engine {engine!r}")
    return engine


def delaunay(points, engine="auto", seed=0):
    """Unconstrained Delaunay triangulation as ``(triangles, neighbours)``."""
    points = np.asarray(points, float)
    if _choose_engine(engine, len(points)) == "bowyer_watson":
        return delaunay_bowyer_watson(points, seed=seed)
    return _qhull(points)


def _locate_triangles(P, T, queries):
    """Index of a triangle containing each query point, -1 when outside."""
    out = np.full(len(queries), -1, np.int64)
    if len(T) == 0 or len(queries) == 0:
        return out
    cen = P[T].mean(axis=1)
    k = min(12, len(T))
    _, cand = cKDTree(cen).query(queries, k=k)
    cand = cand.reshape(len(queries), k)
    A, B, C = P[T[:, 0]], P[T[:, 1]], P[T[:, 2]]
    for j in range(k):
        c = cand[:, j]
        q = queries
        todo = out < 0
        o1 = _orient_vec(A[c], B[c], q)
        o2 = _orient_vec(B[c], C[c], q)
        o3 = _orient_vec(C[c], A[c], q)
        inside = todo & (o1 >= 0) & (o2 >= 0) & (o3 >= 0)
        out[inside] = c[inside]
    miss = np.nonzero(out < 0)[0]
    if len(miss) and len(T) <= 200_000:
        for m in miss:
            q = queries[m]
            o1 = _orient_vec(A, B, q[None])
            o2 = _orient_vec(B, C, q[None])
            o3 = _orient_vec(C, A, q[None])
            hit = np.nonzero((o1 >= 0) & (o2 >= 0) & (o3 >= 0))[0]
            if len(hit):
                out[m] = hit[0]
    return out


def _orient_vec(A, B, Q):
    return (A[:, 0] - Q[:, 0]) * (B[:, 1] - Q[:, 1]) - (A[:, 1] - Q[:, 1]) * (B[:, 0] - Q[:, 0])


def triangulate_constrained(pinput: PlanarInput, engine: str = "auto", seed: int = 0) -> PlanarMesh:
    """Constrained Delaunay triangulation of ``pinput`` with holes removed."""
    P = pinput.points
    if not np.all(np.isfinite(P)):
        raise InvalidInputError("non-finite input point")
    n = len(P)
    segs = pinput.segments.copy()
    if len(segs) and (segs.min() < 0 or segs.max() >= n):
        raise InvalidInputError("segment index out of range")
    regions = list(pinput.segment_region)
    remap = _merge_duplicates(P) if n > 1 else np.arange(n)
    if len(segs):
        segs = remap[segs]
        keep = segs[:, 0] != segs[:, 1]
        segs = segs[keep]
        regions = [r for r, k in zip(regions, keep) if k]
    bad = _segments_cross(P, segs)
    if bad:
        i, j = bad[0]
        raise SegmentIntersectionError(
            f"constraint segments {i} ({segs[i].tolist()}) and {j} ({segs[j].tolist()}) intersect",
            (i, j))
    used = np.unique(remap)
    Pu = P[used]
    local = np.full(n, -1, np.int64)
    local[used] = np.arange(len(used))
    T, N = delaunay(Pu, engine, seed)
    T = used[T]
    P_full = P
    cons_list = [tuple(s) for s in segs.tolist()]
    cons_regions = dict()
    for (a, b), r in zip(cons_list, regions):
        cons_regions[(min(a, b), max(a, b))] = r
    if len(T):
        ekeys = set(_edge_keys(np.concatenate([T[:, 0], T[:, 1], T[:, 2]]),
                               np.concatenate([T[:, 1], T[:, 2], T[:, 0]]), n).tolist())
    else:
        ekeys = set()
    missing = [s for s in cons_list if (min(s) * n + max(s)) not in ekeys]
    if missing:
        tr = _Triangulation.from_arrays([tuple(p) for p in P_full], T, N)
        cons = set(cons_regions)
        todo = list(missing)
        flipped = []
        while todo:
            a, b = todo.pop()
            new_edges, parts = _recover_segment(tr, a, b, cons)
            if parts:
                r = cons_regions.pop((min(a, b), max(a, b)))
                cons.discard((min(a, b), max(a, b)))
                for x, y in parts:
                    cons.add((min(x, y), max(x, y)))
                    cons_regions[(min(x, y), max(x, y))] = r
                todo.extend(parts)
                continue
            flipped.extend(new_edges)
        _legalize(tr, flipped, cons)
        T = np.array([tr.V[t] for t in range(len(tr.V))], np.int64)
        N = np.array([tr.N[t] for t in range(len(tr.N))], np.int64)
    seg_arr = np.array(sorted(cons_regions), np.int64).reshape(-1, 2)
    seg_regions = [cons_regions[tuple(s)] for s in seg_arr.tolist()]
    keep = _flood_fill(P_full, T, N, seg_arr, pinput.holes, n)
    return PlanarMesh(P_full.copy(), T[keep], seg_arr, n, seg_regions)


def _flood_fill(P, T, N, segs, holes, n):
    m = len(T)
    if m == 0:
        return np.zeros(0, bool)
    ckeys = _edge_keys(segs[:, 0], segs[:, 1], n) if len(segs) else np.zeros(0, np.int64)
    rows, cols = [], []
    outside_seed = []
    for i in range(3):
        a = T[:, (i + 1) % 3]
        b = T[:, (i + 2) % 3]
        keys = _edge_keys(a, b, n)
        constrained = np.isin(keys, ckeys)
        nb = N[:, i]
        ok = (~constrained) & (nb >= 0)
        rows.append(np.nonzero(ok)[0])
        cols.append(nb[ok])
        outside_seed.append(np.nonzero((~constrained) & (nb < 0))[0])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    g = coo_matrix((np.ones(len(r)), (r, c)), shape=(m, m))
    _, lab = connected_components(g, directed=False)
    drop = set(lab[np.concatenate(outside_seed)].tolist()) if len(segs) else set()
    if len(holes):
        hit = _locate_triangles(P, T, holes)
        for h in hit:
            if h >= 0:
                drop.add(int(lab[h]))
    if not drop:
        return np.ones(m, bool)
    return ~np.isin(lab, np.array(sorted(drop)))


# ---------------------------------------------------------------------------
# quality / Delaunay diagnostics


def triangle_quality(P, T):
    """Longest edge, smallest angle (degrees), circumcentres and circumradii."""
    A, B, C = P[T[:, 0]], P[T[:, 1]], P[T[:, 2]]
    a = np.linalg.norm(B - C, axis=1)
    b = np.linalg.norm(C - A, axis=1)
    c = np.linalg.norm(A - B, axis=1)
    longest = np.maximum(np.maximum(a, b), c)
    ang = []
    for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
        cosv = np.clip((y * y + z * z - x * x) / (2 * y * z), -1.0, 1.0)
        ang.append(np.degrees(np.arccos(cosv)))
    min_angle = np.minimum(np.minimum(ang[0], ang[1]), ang[2])
    bx, by = B[:, 0] - A[:, 0], B[:, 1] - A[:, 1]
    cx, cy = C[:, 0] - A[:, 0], C[:, 1] - A[:, 1]
    d = 2.0 * (bx * cy - by * cx)
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (cy * b2 - by * c2) / d
    uy = (bx * c2 - cx * b2) / d
    cc = np.column_stack([A[:, 0] + ux, A[:, 1] + uy])
    radius = np.hypot(ux, uy)
    return longest, min_angle, cc, radius


def non_delaunay_edges(mesh: PlanarMesh, tol: float = DELAUNAY_TOL):
    """Unconstrained interior edges whose opposite vertex lies inside the
    circumcircle (relative in-circle value above ``tol``)."""
    P, T = mesh.points, mesh.triangles
    m = len(T)
    if m == 0:
        return np.zeros((0, 2), np.int64)
    n = len(P)
    half = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    opp = np.concatenate([T[:, 2], T[:, 0], T[:, 1]])
    tri = np.concatenate([np.arange(m)] * 3)
    key_fwd = half[:, 0] * n + half[:, 1]
    key_rev = half[:, 1] * n + half[:, 0]
    order = np.argsort(key_fwd)
    pos = np.searchsorted(key_fwd[order], key_rev)
    pos = np.minimum(pos, len(order) - 1)
    match = key_fwd[order][pos] == key_rev
    cons = set(_edge_keys(mesh.segments[:, 0], mesh.segments[:, 1], n).tolist()) \
        if len(mesh.segments) else set()
    idx = np.nonzero(match)[0]
    other = order[pos[idx]]
    keys = _edge_keys(half[idx, 0], half[idx, 1], n)
    free = np.fromiter((k not in cons for k in keys.tolist()), bool, len(idx))
    idx, other = idx[free], other[free]
    t = tri[idx]
    q = opp[other]
    A, B, C, D = P[T[t, 0]], P[T[t, 1]], P[T[t, 2]], P[q]
    val = incircle_many(A, B, C, D)
    scale = np.max(np.abs(np.concatenate([A, B, C, D], axis=1)), axis=1) ** 4 + 1e-300
    bad = val > tol * np.maximum(scale, 1.0)
    return half[idx[bad]]


def brute_force_delaunay(points) -> set:
    """All triangles whose circumcircle is empty under the symbolic
    tie-break. O(n^4); test oracle only."""
    P = np.asarray(points, float)
    n = len(P)
    out = set()
    idx = np.array([(i, j, k) for i in range(n) for j in range(i + 1, n)
                    for k in range(j + 1, n)], np.int64).reshape(-1, 3)
    if len(idx) == 0:
        return out
    o = orient2d_many(P[idx[:, 0]], P[idx[:, 1]], P[idx[:, 2]])
    idx = idx[o != 0]
    o = o[o != 0]
    swap = o < 0
    idx[swap] = idx[swap][:, [0, 2, 1]]
    A, B, C = P[idx[:, 0]], P[idx[:, 1]], P[idx[:, 2]]
    empty = np.ones(len(idx), bool)
    unsure = np.zeros(len(idx), bool)
    for l in range(n):
        D = np.broadcast_to(P[l], A.shape)
        val = incircle_many(A, B, C, D)
        member = (idx == l).any(axis=1)
        empty &= member | (val <= 0)
        unsure |= ~member & (val == 0)
    for t in np.nonzero(unsure & empty)[0]:
        a, b, c = idx[t]
        for l in range(n):
            if l in (a, b, c):
                continue
            if incircle_sos(P[a], P[b], P[c], P[l], a, b, c, l) > 0:
                empty[t] = False
                break
    for a, b, c in idx[empty].tolist():
        out.add(frozenset((a, b, c)))
    return out


# ---------------------------------------------------------------------------
# refinement


class SizingField:
    """Target edge length, blended between regions by inverse-square
    distance to each region's constrained segments."""

    def __init__(self, points, segments, segment_region, sizing):
        self.sizing = dict(sizing)
        self.trees = []
        self.values = []
        regions = sorted({r for r in segment_region if r in self.sizing})
        for r in regions:
            sel = [i for i, x in enumerate(segment_region) if x == r]
            s = segments[sel]
            A, B = points[s[:, 0]], points[s[:, 1]]
            samples = np.concatenate([A, 0.5 * (A + B)])
            self.trees.append(cKDTree(samples))
            self.values.append(self.sizing[r])
        self.default = self.sizing.get("default", min(self.values) if self.values else np.inf)
        self.uniform = len(set(self.values)) <= 1

    def __call__(self, x):
        x = np.atleast_2d(x)
        if not self.values:
            return np.full(len(x), self.default)
        if self.uniform:
            return np.full(len(x), self.values[0])
        num = np.zeros(len(x))
        den = np.zeros(len(x))
        for tree, h in zip(self.trees, self.values):
            d, _ = tree.query(x)
            w = 1.0 / (d * d + 1e-300)
            num += w * h
            den += w
        return num / den


def _neighbours(T):
    """Neighbour across the edge opposite each vertex, -1 on the boundary."""
    m = len(T)
    N = np.full((m, 3), -1, np.int64)
    if m == 0:
        return N
    n = int(T.max()) + 1
    u = np.concatenate([T[:, 1], T[:, 2], T[:, 0]])
    w = np.concatenate([T[:, 2], T[:, 0], T[:, 1]])
    tri = np.tile(np.arange(m), 3)
    loc = np.repeat(np.arange(3), m)
    key = u * n + w
    order = np.argsort(key, kind="stable")
    sk = key[order]
    pos = np.minimum(np.searchsorted(sk, w * n + u), len(sk) - 1)
    hit = sk[pos] == w * n + u
    N[tri[hit], loc[hit]] = tri[order[pos[hit]]]
    return N


class _LocalCDT:
    """Constrained Bowyer-Watson insertion into an existing triangulation.

    Used for the small batches at the end of refinement, where rebuilding
    the whole triangulation would dominate the cost. Cavities never cross
    a constrained edge or the mesh boundary.
    """

    def __init__(self, P, T, cons):
        self.P = [tuple(p) for p in P.tolist()]
        self.V = T.tolist()
        self.N = _neighbours(T).tolist()
        self.cons = cons
        self.dirty = set()

    def insert(self, t0, p):
        """Insert ``p`` seeded at triangle ``t0`` (which must conflict)."""
        P, V, N, cons = self.P, self.V, self.N, self.cons
        ip = len(P)
        a, b, c = V[t0]
        if incircle_sos(P[a], P[b], P[c], p, a, b, c, ip) <= 0:
            return False
        inset = {t0}
        stack = [t0]
        while stack:
            t = stack.pop()
            vs = V[t]
            for i in range(3):
                nb = N[t][i]
                if nb < 0 or nb in inset:
                    continue
                u, w = vs[(i + 1) % 3], vs[(i + 2) % 3]
                if (min(u, w), max(u, w)) in cons:
                    continue
                x, y, z = V[nb]
                if incircle_sos(P[x], P[y], P[z], p, x, y, z, ip) > 0:
                    inset.add(nb)
                    stack.append(nb)
        boundary = []
        for t in inset:
            vs = V[t]
            for i in range(3):
                nb = N[t][i]
                if nb in inset:
                    continue
                u, w = vs[(i + 1) % 3], vs[(i + 2) % 3]
                if orient2d(P[u], P[w], p) <= 0:
                    return False  # not visible: outside the region or behind a constraint
                pu = P[u]
                if (pu[0] - p[0]) ** 2 + (pu[1] - p[1]) ** 2 <= DUPLICATE_TOL ** 2:
                    return False
                boundary.append((u, w, nb, t))
        P.append(tuple(p))
        slots = sorted(inset)
        while len(slots) < len(boundary):
            V.append(None)
            N.append(None)
            slots.append(len(V) - 1)
        start_at, end_at = {}, {}
        for s, (u, w, nb, old) in zip(slots, boundary):
            V[s] = [u, w, ip]
            N[s] = [-1, -1, nb]
            start_at[u] = s
            end_at[w] = s
            if nb >= 0:
                lst = N[nb]
                for j in range(3):
                    if lst[j] == old and V[nb][(j + 1) % 3] == w and V[nb][(j + 2) % 3] == u:
                        lst[j] = s
        for s in slots:
            u, w, _ = V[s]
            N[s][0] = start_at[w]
            N[s][1] = end_at[u]
        self.dirty.update(slots)
        return True

    def triangles(self):
        return np.array(self.V, np.int64).reshape(-1, 3)

    def points(self):
        return np.array(self.P, float).reshape(-1, 2)


class _Quality:
    """Per-triangle quality measures and target sizes, updated in place for
    the triangles touched by local insertion."""

    def __init__(self, P, T, hfun):
        self.hfun = hfun
        self.longest, self.minang, self.cc, self.rad = triangle_quality(P, T)
        self.hloc = hfun(P[T].mean(axis=1)) if len(T) else np.zeros(0)

    def update(self, P, T, idx):
        idx = np.asarray(sorted(idx), np.int64)
        m = len(T)
        if m > len(self.longest):
            grow = m - len(self.longest)
            self.longest = np.concatenate([self.longest, np.zeros(grow)])
            self.minang = np.concatenate([self.minang, np.zeros(grow)])
            self.cc = np.concatenate([self.cc, np.zeros((grow, 2))])
            self.rad = np.concatenate([self.rad, np.zeros(grow)])
            self.hloc = np.concatenate([self.hloc, np.zeros(grow)])
        if len(idx) == 0:
            return
        sub = T[idx]
        lo, mi, cc, rad = triangle_quality(P, sub)
        self.longest[idx], self.minang[idx], self.cc[idx], self.rad[idx] = lo, mi, cc, rad
        self.hloc[idx] = self.hfun(P[sub].mean(axis=1))


LOCAL_BATCH_FRACTION = 0.01
LOCAL_BATCH_MIN = 200


def refine_to_sizing(mesh: PlanarMesh, pinput: PlanarInput, min_angle: float = 20.0,
                     split_segments: bool = True, max_insertions: int = 10 ** 7,
                     engine: str = "auto", seed: int = 0) -> PlanarMesh:
    """Delaunay refinement by batched circumcentre insertion.

    Triangles are refined while their longest edge exceeds the local target
    size or their smallest angle is below ``min_angle``. A circumcentre
    that encroaches a constrained segment is replaced by the segment
    midpoint when ``split_segments`` is set and dropped otherwise. Within a
    round, candidates closer than half a circumradius to an earlier
    accepted candidate are deferred. Large rounds rebuild the constrained
    triangulation; small ones insert locally.
    """
    hfun = SizingField(pinput.points, pinput.segments, pinput.segment_region, pinput.sizing)
    pts = mesh.points.copy()
    segs = mesh.segments.copy()
    regions = list(mesh.segment_region) or ["default"] * len(segs)
    P, T = mesh.points, mesh.triangles
    qual = _Quality(P, T, hfun)
    local = None
    inserted = 0
    rejected = 0
    while True:
        if len(T) == 0:
            break
        longest, minang, cc, rad, hloc = qual.longest, qual.minang, qual.cc, qual.rad, qual.hloc
        too_big = longest > hloc * (1 + 1e-9)
        skinny = minang < min_angle - 1e-9
        bad = np.nonzero(too_big | skinny)[0]
        if len(bad) == 0:
            break
        prio = np.where(too_big[bad], longest[bad] / hloc[bad], 0.0) + \
            np.where(skinny[bad], (min_angle - minang[bad]) / min_angle, 0.0)
        bad = bad[np.argsort(-prio, kind="stable")]
        cand = cc[bad]
        r_c = rad[bad]
        # encroachment of constrained segments
        A, B = pts[segs[:, 0]], pts[segs[:, 1]]
        mid = 0.5 * (A + B)
        half = 0.5 * np.linalg.norm(B - A, axis=1)
        stree = cKDTree(mid)
        hits = stree.query_ball_point(cand, half.max() * (1 + 1e-12))
        encroach = [[s for s in h if np.sum((cand[k] - mid[s]) ** 2) < half[s] ** 2 * (1 - 1e-12)]
                    for k, h in enumerate(hits)]
        accepted = []
        split = set()
        ctree = cKDTree(cand)
        nbr_lists = ctree.query_ball_point(cand, 0.5 * r_c)
        blocked = np.zeros(len(cand), bool)
        for k in range(len(cand)):
            if blocked[k]:
                continue
            if encroach[k]:
                if split_segments:
                    split.update(encroach[k])
                else:
                    rejected += 1
                continue
            accepted.append(k)
            for j in nbr_lists[k]:
                if j != k:
                    blocked[j] = True
        if not accepted and not split:
            break
        small = len(accepted) <= max(LOCAL_BATCH_MIN, LOCAL_BATCH_FRACTION * len(pts))
        if small and not split:
            if local is None:
                cons = {(min(a, b), max(a, b)) for a, b in segs.tolist()}
                local = _LocalCDT(pts, T, cons)
            local.dirty = set()
            touched = set()
            count = 0
            for k in accepted:
                t = int(bad[k])
                if t in touched:
                    continue  # destroyed earlier in this round; retried next round
                if local.insert(t, (float(cand[k, 0]), float(cand[k, 1]))):
                    count += 1
                    touched |= local.dirty
                else:
                    rejected += 1
            if count == 0:
                break
            pts = local.points()
            T = local.triangles()
            P = pts
            qual.update(P, T, touched)
            inserted += count
        else:
            inside = _locate_triangles(P, T, cand[accepted]) >= 0
            rejected += int(np.count_nonzero(~inside))
            accepted = [k for k, ok in zip(accepted, inside) if ok]
            new_pts = [cand[accepted]]
            if split:
                split = sorted(split)
                base = len(pts) + len(accepted)
                new_pts.append(mid[split])
                keep = np.ones(len(segs), bool)
                keep[split] = False
                add = []
                add_regions = []
                for k, s in enumerate(split):
                    m_idx = base + k
                    add.append((segs[s, 0], m_idx))
                    add.append((m_idx, segs[s, 1]))
                    add_regions += [regions[s], regions[s]]
                regions = [r for r, k in zip(regions, keep) if k] + add_regions
                segs = np.concatenate([segs[keep], np.array(add, np.int64)])
            if not accepted and not split:
                break
            pts = np.concatenate([pts] + new_pts)
            inserted += sum(len(x) for x in new_pts)
            current = triangulate_constrained(
                PlanarInput(pts, segs, pinput.holes, pinput.sizing, regions), engine=engine, seed=seed)
            segs = current.segments
            regions = current.segment_region
            P, T = current.points, current.triangles
            qual = _Quality(P, T, hfun)
            local = None
        if inserted > max_insertions:
            raise RefinementError(f"refinement exceeded {max_insertions} insertions")
    out = PlanarMesh(np.asarray(pts, float).copy(), T, segs, mesh.n_input, list(regions))
    out.rejected = rejected
    return out


def mesh_domain(pinput: PlanarInput, split_segments: bool = True, min_angle: float = 20.0,
                engine: str = "auto", seed: int = 0) -> PlanarMesh:
    """Triangulate and refine in one call."""
    base = triangulate_constrained(pinput, engine=engine, seed=seed)
    return refine_to_sizing(base, pinput, min_angle=min_angle,
                            split_segments=split_segments, engine=engine, seed=seed)
