"""
Splitting a space-time prism into tetrahedra
============================================

A boundary triangle swept from one time level to the next is a triangular
prism. Its three lateral quads are shared with neighbouring prisms, so the
split must cut every quad the same way from either side. Both templates
here put a Steiner point at each quad centroid and cut the quad into four
triangles through it.
"""

import numpy as np

from stslab.geom_core import total_measure
from stslab.slab3d import (C_TETS, E_TETS, QUADS, FaceSteinerRegistry, reference_points,
                           reference_split, split_prisms)

# reference prism: r1..r6 are the corners, r7..r9 the quad centroids and
# r10 the prism centroid
P = reference_points()
for i, p in enumerate(P, start=1):
    print(f"r{i:<2d} {p}")

# strategy C uses 10 tets and strategy E uses 14; both fill the prism
for name in ("C", "E"):
    m = reference_split(name)
    print(f"\nstrategy {name}: {m.n_cells} tets on {m.n_vertices} vertices, "
          f"volume {total_measure(m).total:.15g}")


# the quad patterns agree, which is what lets C and E prisms sit side by side
def quad_faces(tets, labels):
    out = set()
    for t in tets:
        for k in range(4):
            f = frozenset(v for j, v in enumerate(t) if j != k)
            if f <= labels:
                out.add(f)
    return out


for q, corners in QUADS.items():
    labels = frozenset(corners) | {q}
    same = quad_faces(C_TETS, labels) == quad_faces(E_TETS, labels)
    print(f"quad r{q} {corners}: C and E agree = {same}")

# a curved prism: the top face is moved and twisted, and the split volume
# still equals the ruled volume between the two triangles
rng = np.random.default_rng(3)
R = P[:6].copy()
R[3:] += rng.normal(scale=0.1, size=(3, 3))
reg = FaceSteinerRegistry(R)
T = split_prisms([[0, 1, 2]], [[3, 4, 5]], reg, "E")[0]
X = np.vstack([reg.coords, reg.all_points()])
V = X[T]
vol = np.abs(np.einsum("ij,ij->i", np.cross(V[:, 1] - V[:, 0], V[:, 2] - V[:, 0]),
                       V[:, 3] - V[:, 0])).sum() / 6
print(f"\nperturbed prism, strategy E volume: {vol:.12f}")
