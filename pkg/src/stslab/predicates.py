"""Planar orientation and in-circle predicates.

Each predicate first evaluates in plain doubles and accepts the result when
it clears a static forward error bound. Otherwise it re-evaluates in
double-double arithmetic.

Exact in-circle ties are broken by symbolic perturbation of the lifting
map: point ``i`` is lifted by ``eps**(i + 1)`` so the point with the
smallest global index dominates. Under this rule every point set has a
unique Delaunay triangulation, which is what lets the incremental
triangulator and the brute-force oracle agree cell for cell.
"""

from __future__ import annotations

import numpy as np

_EPS = np.finfo(float).eps / 2
CCW_ERRBOUND = (3.0 + 16.0 * _EPS) * _EPS
ICC_ERRBOUND = (10.0 + 96.0 * _EPS) * _EPS
_SPLITTER = 134217729.0


# --- double-double kernels (scalars) ---------------------------------------

def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dd_add(x, y):
    s, e = _two_sum(x[0], y[0])
    e += x[1] + y[1]
    return _quick_two_sum(s, e)


def _dd_neg(x):
    return -x[0], -x[1]


def _dd_mul(x, y):
    p, e = _two_prod(x[0], y[0])
    e += x[0] * y[1] + x[1] * y[0]
    return _quick_two_sum(p, e)


def _dd_sub(a, b):
    return _two_sum(a, -b)


def _orient_dd(a, b, c):
    acx = _dd_sub(a[0], c[0])
    bcx = _dd_sub(b[0], c[0])
    acy = _dd_sub(a[1], c[1])
    bcy = _dd_sub(b[1], c[1])
    return _dd_add(_dd_mul(acx, bcy), _dd_neg(_dd_mul(acy, bcx)))


def _incircle_dd(a, b, c, d):
    adx, ady = _dd_sub(a[0], d[0]), _dd_sub(a[1], d[1])
    bdx, bdy = _dd_sub(b[0], d[0]), _dd_sub(b[1], d[1])
    cdx, cdy = _dd_sub(c[0], d[0]), _dd_sub(c[1], d[1])
    alift = _dd_add(_dd_mul(adx, adx), _dd_mul(ady, ady))
    blift = _dd_add(_dd_mul(bdx, bdx), _dd_mul(bdy, bdy))
    clift = _dd_add(_dd_mul(cdx, cdx), _dd_mul(cdy, cdy))
    t1 = _dd_add(_dd_mul(bdx, cdy), _dd_neg(_dd_mul(cdx, bdy)))
    t2 = _dd_add(_dd_mul(cdx, ady), _dd_neg(_dd_mul(adx, cdy)))
    t3 = _dd_add(_dd_mul(adx, bdy), _dd_neg(_dd_mul(bdx, ady)))
    s = _dd_add(_dd_mul(alift, t1), _dd_mul(blift, t2))
    return _dd_add(s, _dd_mul(clift, t3))


# --- scalar predicates -------------------------------------------------------

def orient2d(a, b, c) -> float:
    """Twice the signed area of ``abc``; positive when counter-clockwise."""
    detl = (a[0] - c[0]) * (b[1] - c[1])
    detr = (a[1] - c[1]) * (b[0] - c[0])
    det = detl - detr
    if abs(det) >= CCW_ERRBOUND * (abs(detl) + abs(detr)):
        return det
    hi, lo = _orient_dd((float(a[0]), float(a[1])), (float(b[0]), float(b[1])),
                        (float(c[0]), float(c[1])))
    return hi + lo


def incircle(a, b, c, d) -> float:
    """Positive when ``d`` lies inside the circle through counter-clockwise ``abc``."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    bc = bdx * cdy - cdx * bdy
    ca = cdx * ady - adx * cdy
    ab = adx * bdy - bdx * ady
    al = adx * adx + ady * ady
    bl = bdx * bdx + bdy * bdy
    cl = cdx * cdx + cdy * cdy
    det = al * bc + bl * ca + cl * ab
    perm = (al * (abs(bdx * cdy) + abs(cdx * bdy))
            + bl * (abs(cdx * ady) + abs(adx * cdy))
            + cl * (abs(adx * bdy) + abs(bdx * ady)))
    if abs(det) > ICC_ERRBOUND * perm:
        return det
    pts = [(float(p[0]), float(p[1])) for p in (a, b, c, d)]
    hi, lo = _incircle_dd(*pts)
    return hi + lo


def incircle_sos(a, b, c, d, ia, ib, ic, id_) -> int:
    """Sign of :func:`incircle` with the symbolic tie-break; never zero
    unless three of the points are collinear."""
    det = incircle(a, b, c, d)
    if det > 0:
        return 1
    if det < 0:
        return -1
    coeffs = {
        ia: lambda: orient2d(b, c, d),
        ib: lambda: orient2d(c, a, d),
        ic: lambda: orient2d(a, b, d),
        id_: lambda: -orient2d(a, b, c),
    }
    for idx in sorted(coeffs):
        v = coeffs[idx]()
        if v > 0:
            return 1
        if v < 0:
            return -1
    return 0


# --- vectorised predicates ---------------------------------------------------

def orient2d_many(A, B, C) -> np.ndarray:
    detl = (A[:, 0] - C[:, 0]) * (B[:, 1] - C[:, 1])
    detr = (A[:, 1] - C[:, 1]) * (B[:, 0] - C[:, 0])
    det = detl - detr
    unsure = np.nonzero(np.abs(det) < CCW_ERRBOUND * (np.abs(detl) + np.abs(detr)))[0]
    for i in unsure:
        det[i] = orient2d(A[i], B[i], C[i])
    return det


def incircle_many(A, B, C, D) -> np.ndarray:
    adx, ady = A[:, 0] - D[:, 0], A[:, 1] - D[:, 1]
    bdx, bdy = B[:, 0] - D[:, 0], B[:, 1] - D[:, 1]
    cdx, cdy = C[:, 0] - D[:, 0], C[:, 1] - D[:, 1]
    al = adx * adx + ady * ady
    bl = bdx * bdx + bdy * bdy
    cl = cdx * cdx + cdy * cdy
    det = (al * (bdx * cdy - cdx * bdy) + bl * (cdx * ady - adx * cdy)
           + cl * (adx * bdy - bdx * ady))
    perm = (al * (np.abs(bdx * cdy) + np.abs(cdx * bdy))
            + bl * (np.abs(cdx * ady) + np.abs(adx * cdy))
            + cl * (np.abs(adx * bdy) + np.abs(bdx * ady)))
    unsure = np.nonzero(np.abs(det) <= ICC_ERRBOUND * perm)[0]
    for i in unsure:
        det[i] = incircle(A[i], B[i], C[i], D[i])
    return det
