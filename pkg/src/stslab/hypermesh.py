"""Tetrahedral meshes of a box with shape-shaped holes.

The mesher starts from a structured grid whose cubes are split into the
six Kuhn tetrahedra along the main diagonal (conforming across cubes),
refines once near the shapes by red-green subdivision when the shape size
is noticeably finer than the box size, and then carves each shape out:

* vertices whose zero-crossing along some edge is very close are snapped
  onto the surface (rolled back when that would flatten or invert a tet);
* every remaining sign-changing edge is cut at the exact root of the
  shape's quadratic implicit function;
* each tet keeps its outside part, split into tetrahedra by marching-tet
  stencils; quadrilaterals are split along the diagonal through their
  smallest global vertex index so neighbouring tets agree.

Every vertex of a shape shell ends exactly on the analytic surface.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import InitialMeshError
from .geom_core import Patch, SimplicialMesh, VertexTag
from .kinematics import MovingScene, project_many

SNAP_FRACTION = 0.25
OWNER_PLACEHOLDER = -2
SNAP_MIN_RATIO = 0.1
REFINE_RATIO = 0.75

_TET_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])


def signed_volumes(X, T):
    a, b, c, d = (X[T[:, i]] for i in range(4))
    return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a) / 6.0


def kuhn_grid(lower, upper, h):
    """Structured Kuhn tetrahedralisation of a box at spacing about ``h``."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    n = np.maximum(1, np.ceil((upper - lower) / h - 1e-9).astype(int))
    axes = [np.linspace(lower[i], upper[i], n[i] + 1) for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    X = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    stride = np.array([(n[1] + 1) * (n[2] + 1), n[2] + 1, 1])
    ii, jj, kk = np.meshgrid(np.arange(n[0]), np.arange(n[1]), np.arange(n[2]), indexing="ij")
    base = (ii.ravel() * stride[0] + jj.ravel() * stride[1] + kk.ravel() * stride[2])
    tets = []
    for perm in itertools.permutations(range(3)):
        v = [base]
        off = np.zeros(3, int)
        for ax in perm:
            off[ax] += 1
            v.append(base + off @ stride)
        tets.append(np.column_stack(v))
    T = np.concatenate(tets)
    return X, _orient_positive(X, T)


def _orient_positive(X, T):
    T = T.copy()
    neg = signed_volumes(X, T) < 0
    T[neg] = T[neg][:, [1, 0, 2, 3]]
    return T


def _edge_table(T):
    e = np.sort(T[:, _TET_EDGES].reshape(-1, 2), axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    return uniq, inv.reshape(len(T), 6)


def red_green_refine(X, T, marked):
    """One level of red-green refinement of the marked tetrahedra."""
    edges, te = _edge_table(T)
    split = np.zeros(len(edges), bool)
    split[te[marked].ravel()] = True
    faces_local = [(0, 1, 3), (0, 2, 4), (1, 2, 5), (3, 4, 5)]  # tet faces by local edge ids
    while True:
        s = split[te]
        cnt = s.sum(axis=1)
        face_full = np.zeros(len(T), bool)
        for f in faces_local:
            face_full |= s[:, list(f)].all(axis=1) & (cnt == 3)
        two_adjacent = np.zeros(len(T), bool)
        for f in faces_local:
            two_adjacent |= (s[:, list(f)].sum(axis=1) == 2) & (cnt == 2)
        promote_face = two_adjacent
        promote_red = (cnt >= 2) & ~face_full & ~two_adjacent & (cnt < 6)
        changed = False
        if promote_face.any():
            for f in faces_local:
                rows = promote_face & (s[:, list(f)].sum(axis=1) == 2)
                if rows.any():
                    split[te[rows][:, list(f)].ravel()] = True
                    changed = True
        if promote_red.any():
            split[te[promote_red].ravel()] = True
            changed = True
        if not changed:
            break
    mid_index = np.full(len(edges), -1, np.int64)
    sel = np.nonzero(split)[0]
    mid_index[sel] = len(X) + np.arange(len(sel))
    Xn = np.concatenate([X, 0.5 * (X[edges[sel, 0]] + X[edges[sel, 1]])])
    s = split[te]
    cnt = s.sum(axis=1)
    out = [T[cnt == 0]]
    # green: one split edge
    for le, (a, b) in enumerate(_TET_EDGES):
        rows = (cnt == 1) & s[:, le]
        if rows.any():
            m = mid_index[te[rows, le]]
            o = [k for k in range(4) if k not in (a, b)]
            t = T[rows]
            out.append(np.column_stack([t[:, a], m, t[:, o[0]], t[:, o[1]]]))
            out.append(np.column_stack([m, t[:, b], t[:, o[0]], t[:, o[1]]]))
    # three split edges on one face
    face_verts = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    for f, fv in zip(faces_local, face_verts):
        rows = (cnt == 3) & s[:, list(f)].all(axis=1)
        if not rows.any():
            continue
        t = T[rows]
        apex = [k for k in range(4) if k not in fv][0]
        p, q, r = (t[:, k] for k in fv)
        ap = t[:, apex]
        lut = {tuple(sorted(_TET_EDGES[le])): mid_index[te[rows, le]] for le in f}
        mpq = lut[tuple(sorted((fv[0], fv[1])))]
        mpr = lut[tuple(sorted((fv[0], fv[2])))]
        mqr = lut[tuple(sorted((fv[1], fv[2])))]
        for tri in ((p, mpq, mpr), (mpq, q, mqr), (mpr, mqr, r), (mpq, mqr, mpr)):
            out.append(np.column_stack([tri[0], tri[1], tri[2], ap]))
    # red
    rows = cnt == 6
    if rows.any():
        t = T[rows]
        m = {tuple(_TET_EDGES[le]): mid_index[te[rows, le]] for le in range(6)}
        v = [t[:, k] for k in range(4)]
        out += [np.column_stack([v[0], m[0, 1], m[0, 2], m[0, 3]]),
                np.column_stack([m[0, 1], v[1], m[1, 2], m[1, 3]]),
                np.column_stack([m[0, 2], m[1, 2], v[2], m[2, 3]]),
                np.column_stack([m[0, 3], m[1, 3], m[2, 3], v[3]])]
        diags = [(m[0, 1], m[2, 3]), (m[0, 2], m[1, 3]), (m[0, 3], m[1, 2])]
        lens = np.stack([np.linalg.norm(Xn[a] - Xn[b], axis=1) for a, b in diags], axis=1)
        choice = np.argmin(lens, axis=1)
        for ci, (a, b) in enumerate(diags):
            r = choice == ci
            if not r.any():
                continue
            others = [d for j, d in enumerate(diags) if j != ci]
            (c1, c2), (c3, c4) = others
            ring = [c1[r], c3[r], c2[r], c4[r]]
            for k in range(4):
                out.append(np.column_stack([a[r], b[r], ring[k], ring[(k + 1) % 4]]))
    Tn = np.concatenate(out)
    return Xn, _orient_positive(Xn, Tn)


def _edge_roots(shape, t, P, Q, phiP, phiQ):
    """Parameter s in (0, 1) of the implicit root on segment P + s (Q - P)."""
    Yp = shape.to_body(P, t)
    Yq = shape.to_body(Q, t)
    ax = shape.axes_at(t)
    U = (Yp / ax)
    D = (Yq - Yp) / ax
    a = np.sum(D * D, axis=1)
    b = 2 * np.sum(U * D, axis=1)
    c = phiP
    disc = np.maximum(b * b - 4 * a * c, 0.0)
    sq = np.sqrt(disc)
    # numerically stable pair of roots
    qv = -0.5 * (b + np.copysign(sq, b))
    r1 = np.where(a != 0, qv / np.where(a != 0, a, 1), np.nan)
    r2 = np.where(qv != 0, c / np.where(qv != 0, qv, 1), np.nan)
    s = np.where((r1 >= 0) & (r1 <= 1), r1, r2)
    s = np.where(np.isfinite(s), s, phiP / (phiP - phiQ))
    return np.clip(s, 0.0, 1.0)


def _dompierre_prism(a, b):
    """Three tets of the prism with bottom ``a`` and top ``b`` (lists of three
    index arrays, ``a[i] - b[i]`` lateral edges); quad diagonals go through
    the smallest index on each quad."""
    A = np.stack(a, axis=1)
    B = np.stack(b, axis=1)
    V = np.concatenate([A, B], axis=1)
    imin = np.argmin(V, axis=1)
    k = imin % 3
    top = imin >= 3
    # rotate so the minimum sits at position 0, swap roles if it is on top
    Ar = np.empty_like(A)
    Br = np.empty_like(B)
    rows = np.arange(len(A))
    for j in range(3):
        Ar[:, j] = np.where(top, B[rows, (k + j) % 3], A[rows, (k + j) % 3])
        Br[:, j] = np.where(top, A[rows, (k + j) % 3], B[rows, (k + j) % 3])
    a0, a1, a2 = Ar.T
    b0, b1, b2 = Br.T
    t1 = np.column_stack([a0, b0, b1, b2])
    diag12 = np.minimum(a1, b2) < np.minimum(a2, b1)
    t2 = np.where(diag12[:, None], np.column_stack([a0, a1, a2, b2]), np.column_stack([a0, a1, a2, b1]))
    t3 = np.where(diag12[:, None], np.column_stack([a0, a1, b2, b1]), np.column_stack([a0, b1, a2, b2]))
    return np.concatenate([t1, t2, t3])


def _quad_pyramid(z, p1, p2, c2, c1):
    """Two tets of the pyramid with apex ``z`` over quad (p1, p2, c2, c1)."""
    Q = np.stack([p1, p2, c2, c1], axis=1)
    m = np.argmin(Q, axis=1)
    d13 = (m == 0) | (m == 2)  # diagonal p1-c2
    t1 = np.where(d13[:, None], np.column_stack([z, p1, p2, c2]), np.column_stack([z, p1, p2, c1]))
    t2 = np.where(d13[:, None], np.column_stack([z, p1, c2, c1]), np.column_stack([z, p2, c2, c1]))
    return np.concatenate([t1, t2])


def carve_shape(X, T, shape, t, h, owner, tag, is_box):
    """Remove the inside of ``shape`` from the tet mesh ``(X, T)``."""
    X = X.copy()
    phi = shape.implicit(X, t)
    sign = np.sign(phi).astype(np.int8)
    frozen = is_box | (tag == int(VertexTag.OBJECT_BOUNDARY))
    # --- snapping -----------------------------------------------------------
    edges, _ = _edge_table(T)
    cross = sign[edges[:, 0]] * sign[edges[:, 1]] < 0
    E = edges[cross]
    if len(E):
        s = _edge_roots(shape, t, X[E[:, 0]], X[E[:, 1]], phi[E[:, 0]], phi[E[:, 1]])
        near0 = s < SNAP_FRACTION
        near1 = (1 - s) < SNAP_FRACTION
        cand = np.unique(np.concatenate([E[near0 & (s <= 1 - s), 0], E[near1 & (s > 1 - s), 1]]))
        cand = cand[~frozen[cand]]
        # also vertices already extremely close to the surface
        tiny = np.nonzero((np.abs(phi) < 1e-12) & ~frozen)[0]
        cand = np.union1d(cand, tiny)
    else:
        cand = np.nonzero((np.abs(phi) < 1e-12) & ~frozen)[0]
    if len(cand):
        vol0 = signed_volumes(X, T)
        Xs = X.copy()
        Xs[cand] = project_many(shape, X[cand], t)
        moving = np.zeros(len(X), bool)
        moving[cand] = True
        touched = moving[T].any(axis=1)
        for _ in range(50):
            vol = signed_volumes(Xs, T[touched])
            bad = vol < SNAP_MIN_RATIO * vol0[touched]
            if not bad.any():
                break
            undo = np.unique(T[touched][bad].ravel())
            undo = undo[moving[undo]]
            Xs[undo] = X[undo]
            moving[undo] = False
        cand = np.nonzero(moving)[0]
        X = Xs
        sign[cand] = 0
        tag = tag.copy()
        owner = owner.copy()
        tag[cand] = int(VertexTag.OBJECT_BOUNDARY)
        owner[cand] = OWNER_PLACEHOLDER
    # --- cutting ------------------------------------------------------------
    edges, te = _edge_table(T)
    cross = sign[edges[:, 0]] * sign[edges[:, 1]] < 0
    ce = np.nonzero(cross)[0]
    cut_index = np.full(len(edges), -1, np.int64)
    cut_index[ce] = len(X) + np.arange(len(ce))
    E = edges[ce]
    if len(E):
        phi_e0 = shape.implicit(X[E[:, 0]], t)
        phi_e1 = shape.implicit(X[E[:, 1]], t)
        s = _edge_roots(shape, t, X[E[:, 0]], X[E[:, 1]], phi_e0, phi_e1)
        C = X[E[:, 0]] + s[:, None] * (X[E[:, 1]] - X[E[:, 0]])
        C = project_many(shape, C, t)
        X = np.concatenate([X, C])
        tag = np.concatenate([tag, np.full(len(C), int(VertexTag.OBJECT_BOUNDARY), np.int8)])
        owner = np.concatenate([owner, np.full(len(C), OWNER_PLACEHOLDER, np.int32)])
        is_box = np.concatenate([is_box, np.zeros(len(C), bool)])
    sg = sign[T]
    npos = (sg > 0).sum(axis=1)
    nneg = (sg < 0).sum(axis=1)
    keep = T[(npos > 0) & (nneg == 0)]
    out = [keep]
    mixed = np.nonzero((npos > 0) & (nneg > 0))[0]
    if len(mixed):
        Tm = T[mixed]
        sgm = sg[mixed]
        # order local vertices: positives, zeros, negatives (stable)
        order = np.argsort(-sgm, axis=1, kind="stable")
        V = np.take_along_axis(Tm, order, axis=1)
        npm = npos[mixed]
        nzm = 4 - npos[mixed] - nneg[mixed]
        lut = _edge_lookup(edges, cut_index)

        def cut(u, v):
            return lut(u, v)

        v0, v1, v2, v3 = V.T
        # (1, 0, 3)
        r = (npm == 1) & (nzm == 0)
        if r.any():
            p = v0[r]
            out.append(np.column_stack([p, cut(p, v1[r]), cut(p, v2[r]), cut(p, v3[r])]))
        r = (npm == 1) & (nzm == 1)
        if r.any():
            p, z = v0[r], v1[r]
            out.append(np.column_stack([p, z, cut(p, v2[r]), cut(p, v3[r])]))
        r = (npm == 1) & (nzm == 2)
        if r.any():
            p = v0[r]
            out.append(np.column_stack([p, v1[r], v2[r], cut(p, v3[r])]))
        r = (npm == 2) & (nzm == 1)
        if r.any():
            p1, p2, z, m = v0[r], v1[r], v2[r], v3[r]
            out.append(_quad_pyramid(z, p1, p2, cut(p2, m), cut(p1, m)))
        r = (npm == 2) & (nzm == 0)
        if r.any():
            p1, p2, m1, m2 = v0[r], v1[r], v2[r], v3[r]
            out.append(_dompierre_prism([p1, cut(p1, m1), cut(p1, m2)],
                                        [p2, cut(p2, m1), cut(p2, m2)]))
        r = (npm == 3)
        if r.any():
            p1, p2, p3, m = v0[r], v1[r], v2[r], v3[r]
            out.append(_dompierre_prism([p1, p2, p3], [cut(p1, m), cut(p2, m), cut(p3, m)]))
    Tn = np.concatenate(out)
    return X, Tn, tag, owner, is_box


def _edge_lookup(edges, values):
    n = int(edges.max()) + 1 if len(edges) else 1
    keys = edges[:, 0] * n + edges[:, 1]
    order = np.argsort(keys)
    sk = keys[order]

    def look(u, v):
        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        k = lo * n + hi
        pos = np.searchsorted(sk, k)
        res = values[order[np.minimum(pos, len(sk) - 1)]]
        if np.any(sk[np.minimum(pos, len(sk) - 1)] != k) or np.any(res < 0):
            raise InitialMeshError("marching stencil requested an edge without a cut")
        return res
    return look


def _near_shapes(X, T, scene, t, band):
    cen = X[T].mean(axis=1)
    near = np.zeros(len(T), bool)
    for s in scene.shapes:
        d = np.linalg.norm(s.to_body(cen, t), axis=1)
        near |= d < np.max(s.axes_at(t)) + band
    return near


def generate_initial_hypermesh(scene: MovingScene, h_box: float, h_shape: float,
                               t: float | None = None) -> SimplicialMesh:
    """Tetrahedral mesh of the box minus the shapes at time ``t``, lifted
    into space-time as the plane ``t = const``."""
    t = scene.t0 if t is None else float(t)
    if scene.dim != 3:
        raise InitialMeshError("hypersurface meshes need a 3D scene")
    X, T = kuhn_grid(scene.box.lower, scene.box.upper, h_box)
    if scene.shapes and h_shape < REFINE_RATIO * h_box:
        marked = _near_shapes(X, T, scene, t, 1.5 * h_box)
        X, T = red_green_refine(X, T, marked)
    box = scene.box
    tol = 1e-12 * box.diagonal
    is_box = np.any((np.abs(X - box.lower) <= tol) | (np.abs(X - box.upper) <= tol), axis=1)
    tag = np.where(is_box, int(VertexTag.BOX_BOUNDARY), int(VertexTag.INTERIOR)).astype(np.int8)
    owner = np.full(len(X), -1, np.int32)
    for k, shape in enumerate(scene.shapes):
        X, T, tag, owner, is_box = carve_shape(X, T, shape, t, h_shape, owner, tag, is_box)
        owner[owner == OWNER_PLACEHOLDER] = k
    used = np.zeros(len(X), bool)
    used[T.ravel()] = True
    remap = np.cumsum(used) - 1
    X, tag, owner = X[used], tag[used], owner[used]
    T = _orient_positive(X, remap[T])
    vol = signed_volumes(X, T)
    if np.any(vol <= 1e-14 * h_box ** 3):
        raise InitialMeshError(f"{int(np.sum(vol <= 1e-14 * h_box ** 3))} degenerate tets after carving")
    V4 = np.column_stack([X, np.full(len(X), t)])
    return SimplicialMesh(V4, T, tag, np.full(len(T), int(Patch.TERMINATING), np.int8), owner)
