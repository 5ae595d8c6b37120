import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from generators import random_prism
from oracles import ruled_prism_volume
from stslab.errors import DegenerateSplitError, ExternalMesherError, InvalidMeshError, TanglingError
from stslab.geom_core import (Patch, SimplicialMesh, VertexTag, hull_closure_check,
                              tetrahedron_volumes, total_measure)
from stslab.io_formats import config_from_dict
from stslab.pipeline import run, slab_config
from stslab.scenes import benchmark
from stslab.slab import SlabConfig
from stslab.slab3d import (C_TETS, E_TETS, QUADS, FaceSteinerRegistry, TopologyTransfer,
                           ExternalMesher, TriangularPrism, build_slab_3d,
                           extract_boundary_triangles, mesh_terminating_hyperplane,
                           reference_points, shell_components, split_prism_C, split_prism_E,
                           split_prisms)
from stslab.hypermesh import generate_initial_hypermesh, kuhn_grid

HELPER = Path(__file__).parent / "helpers" / "tetgen_mesher.py"


def ref_registry():
    r = reference_points()[:6]
    return FaceSteinerRegistry(r), TriangularPrism((0, 1, 2), (3, 4, 5))


def label_sets(tets, reg):
    """Global indices back to the r1..r10 labels."""
    name = {i: i + 1 for i in range(6)}
    for q, corners in QUADS.items():
        name[reg.lookup([c - 1 for c in corners])] = q
    for c in reg.prism_centroids:
        if c >= 0:
            name[int(c)] = 10
    return {frozenset(name[int(v)] for v in t) for t in tets}


def sliced_volume(coords, tets):
    V = coords[tets]
    return float(tetrahedron_volumes(V[:, 0], V[:, 1], V[:, 2], V[:, 3]).sum())


def quad_triangles(tets, quad_labels):
    """Triangles of a template lying in one lateral quad (labels)."""
    faces = set()
    for t in tets:
        for i in range(4):
            f = frozenset(v for j, v in enumerate(t) if j != i)
            if f <= quad_labels:
                faces.add(f)
    return faces


class TestTemplates:
    def test_c_reference(self):
        reg, prism = ref_registry()
        tets = split_prism_C(prism, reg)
        assert tets.shape == (10, 4)
        assert label_sets(tets, reg) == {frozenset(t) for t in C_TETS}
        coords = np.vstack([reg.coords, reg.all_points()])
        assert sliced_volume(coords, tets) == pytest.approx(0.5, rel=1e-12)

    def test_e_reference(self):
        reg, prism = ref_registry()
        tets = split_prism_E(prism, reg)
        assert tets.shape == (14, 4)
        assert label_sets(tets, reg) == {frozenset(t) for t in E_TETS}
        coords = np.vstack([reg.coords, reg.all_points()])
        assert sliced_volume(coords, tets) == pytest.approx(0.5, rel=1e-12)

    def test_steiner_coordinates(self):
        P = reference_points()
        assert np.allclose(P[6], [0.5, 0.5, 0.5])
        assert np.allclose(P[7], [0.5, 0.0, 0.5])
        assert np.allclose(P[8], [0.0, 0.5, 0.5])
        assert np.allclose(P[9], [1 / 3, 1 / 3, 0.5])

    @pytest.mark.parametrize("q", sorted(QUADS))
    def test_c_and_e_agree_on_quads(self, q):
        labels = frozenset(QUADS[q]) | {q}
        c = quad_triangles(C_TETS, labels)
        e = quad_triangles(E_TETS, labels)
        assert c == e and len(c) == 4
        assert all(q in f for f in c)

    def test_shared_quad_between_prisms(self):
        # prisms (0,1,2) and (1,3,2) share the quad on edge 1-2
        rng = np.random.default_rng(4)
        B = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], float)
        T = B + [0, 0, 1] + rng.normal(scale=0.05, size=B.shape)
        coords = np.vstack([B, T])
        for strat_a, strat_b in (("C", "C"), ("E", "E"), ("C", "E")):
            reg = FaceSteinerRegistry(coords)
            bottom = np.array([[0, 1, 2], [1, 3, 2]])
            top = bottom + 4
            tets_a = split_prisms(bottom, top, reg, strat_a)[0]
            reg2 = FaceSteinerRegistry(coords)
            tets_b = split_prisms(bottom, top, reg2, strat_b)[1]
            s = reg.lookup([1, 2, 5, 6])
            assert s == reg2.lookup([1, 2, 5, 6])
            shared = frozenset([1, 2, 5, 6, s])
            assert quad_triangles(tets_a.tolist(), shared) == quad_triangles(tets_b.tolist(), shared)

    def test_degenerate_prism(self):
        coords = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 0, 1], [1, 0, 1], [2, 0, 1]], float)
        with pytest.raises(DegenerateSplitError):
            split_prism_E(TriangularPrism((0, 1, 2), (3, 4, 5)), FaceSteinerRegistry(coords))


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["C", "E"]))
def test_split_volume_matches_slicing(seed, strat):
    rng = np.random.default_rng(seed)
    R = random_prism(rng, 0.1)
    reg = FaceSteinerRegistry(R)
    tets = split_prisms([[0, 1, 2]], [[3, 4, 5]], reg, strat)[0]
    coords = np.vstack([R, reg.all_points()])
    ref = ruled_prism_volume(R[:3], R[3:], slices=2000)
    assert sliced_volume(coords, tets) == pytest.approx(ref, rel=1e-6)


@given(st.integers(0, 2 ** 32 - 1))
def test_counts_per_prism(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 20))
    bottom = rng.integers(0, 50, size=(n, 3))
    bottom = bottom[np.all(np.diff(np.sort(bottom, axis=1), axis=1) > 0, axis=1)]
    coords = rng.normal(size=(100, 3))
    for strat, k in (("C", 10), ("E", 14)):
        t = split_prisms(bottom, bottom + 50, FaceSteinerRegistry(coords), strat)
        assert t.shape == (len(bottom), k, 4)


def test_registry_order_independent():
    rng = np.random.default_rng(0)
    coords = rng.normal(size=(12, 3))
    bottom = np.array([[0, 1, 2], [1, 3, 2], [2, 3, 4], [0, 2, 5]])
    top = bottom + 6
    a = FaceSteinerRegistry(coords)
    ta = split_prisms(bottom, top, a, "C")
    perm = np.array([2, 0, 3, 1])
    b = FaceSteinerRegistry(coords)
    tb = split_prisms(bottom[perm], top[perm], b, "C")
    assert np.array_equal(a.keys, b.keys)
    assert np.array_equal(ta[perm], tb)


class TestBoundaryTriangles:
    def test_single_tet(self):
        X = np.column_stack([np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float), np.zeros(4)])
        tris, _ = extract_boundary_triangles(SimplicialMesh(X, [[0, 1, 2, 3]], vertex_tag=[1] * 4))
        assert len(tris) == 4

    def test_cube_six_tets(self):
        X, T = kuhn_grid([0, 0, 0], [1, 1, 1], 1.0)
        m = SimplicialMesh(np.column_stack([X, np.zeros(len(X))]), T, vertex_tag=np.ones(len(X)))
        tris, own = extract_boundary_triangles(m)
        assert len(T) == 6 and len(tris) == 12 and np.all(own == -1)
        P = X[tris]
        n = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
        out = P.mean(axis=1) - 0.5
        assert np.all(np.einsum("ij,ij->i", n, out) > 0)

    def test_sphere_in_cube_components(self):
        sc = config_from_dict(benchmark("stationary_sphere")).scene
        m = generate_initial_hypermesh(sc, 2.5, 1.0)
        tris, own = extract_boundary_triangles(m)
        k, lab = shell_components(tris)
        assert k == 2
        X = m.vertices[:, :3]
        P = X[tris]
        n = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
        radial = P.mean(axis=1) - 5.0
        d = np.einsum("ij,ij->i", n, radial)
        assert np.all(d[own == 0] < 0)   # outward from the domain points into the sphere
        assert np.all(d[own == -1] > 0)

    def test_nonmanifold_face(self):
        X = np.column_stack([np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1],
                                       [0, 0, -1], [1, 1, 1]], float), np.zeros(6)])
        with pytest.raises(InvalidMeshError):
            extract_boundary_triangles(SimplicialMesh(X, [[0, 1, 2, 3], [0, 2, 1, 4], [0, 1, 2, 5]]))


def coarse(name, **sizing):
    return config_from_dict(benchmark(name, sizing=sizing or {"h_box": 2.5, "h_shape": 1.0}))


class TestTerminating:
    def test_static_fixed_point(self):
        rc = coarse("stationary_sphere")
        m = generate_initial_hypermesh(rc.scene, 2.5, 1.0)
        out, vmap = mesh_terminating_hyperplane(m, m.vertices[:, :3], rc.scene, 0.0, 1.0)
        assert np.array_equal(out.vertices[:, :3], m.vertices[:, :3])
        assert np.array_equal(out.cells, m.cells)
        assert np.array_equal(vmap, np.arange(m.n_vertices))

    @pytest.mark.parametrize("interior", ["rigid_blend", "laplacian"])
    def test_expanding_sphere_one_slab(self, interior):
        rc = coarse("expanding_sphere")
        cfg = SlabConfig(h_box=2.5, h_shape=1.0, terminating=TopologyTransfer(interior=interior))
        m = generate_initial_hypermesh(rc.scene, 2.5, 1.0)
        slab = build_slab_3d(m, rc.scene, 0.0, 1.0, cfg)
        X = slab.terminating.vertices
        V = X[slab.terminating.cells][:, :, :3]
        vol = np.einsum("ij,ij->i", np.cross(V[:, 1] - V[:, 0], V[:, 2] - V[:, 0]), V[:, 3] - V[:, 0])
        assert np.all(vol > 0)
        obj = slab.terminating.vertex_tag == int(VertexTag.OBJECT_BOUNDARY)
        r = np.linalg.norm(X[obj, :3] - 5.0, axis=1)
        assert np.max(np.abs(r - 1.25)) <= 1e-10

    def test_rotating_single_slab_tangles(self):
        rc = coarse("rotating_ellipsoid", h_box=4.0, h_shape=1.6)
        m = generate_initial_hypermesh(rc.scene, 4.0, 1.6)
        cfg = SlabConfig(h_box=4.0, h_shape=1.6, terminating=TopologyTransfer())
        with pytest.raises(TanglingError):
            build_slab_3d(m, rc.scene, 0.0, 1.0, cfg)

    def test_external_mesher(self):
        pytest.importorskip("tetgen")
        rc = coarse("rotating_ellipsoid", h_box=1.6, h_shape=0.8)
        m = generate_initial_hypermesh(rc.scene, 1.6, 0.8)
        cmd = f"{sys.executable} {HELPER} {{in}} {{out}}"
        cfg = SlabConfig(h_box=1.6, h_shape=0.8, terminating=ExternalMesher(cmd))
        slab = build_slab_3d(m, rc.scene, 0.0, 0.125, cfg)
        assert slab.closure.closed

    def test_external_mesher_failure(self):
        rc = coarse("stationary_sphere")
        m = generate_initial_hypermesh(rc.scene, 2.5, 1.0)
        cmd = f"{sys.executable} {HELPER} {{in}} {{out}} --fail"
        cfg = SlabConfig(h_box=2.5, h_shape=1.0, terminating=ExternalMesher(cmd))
        with pytest.raises(ExternalMesherError, match="refused"):
            build_slab_3d(m, rc.scene, 0.0, 1.0, cfg)


class TestSlab:
    def test_stationary_sphere_volume(self):
        res = run(coarse("stationary_sphere"))
        exact = 2600 + 4 * math.pi / 3
        assert abs(res.approx - exact) / exact < 0.05
        fine = run(coarse("stationary_sphere", h_box=1.0, h_shape=0.5))
        assert abs(fine.approx - exact) < abs(res.approx - exact)
        # the plane-volume and lateral-area errors have opposite signs, so
        # check that each one shrinks on its own
        for r in (res, fine):
            s = r.slabs[0]
            r.info["vol"] = abs(1000 - 4 * math.pi / 3 - total_measure(s.initial).total)
            r.info["lat"] = abs(600 + 4 * math.pi - total_measure(s.intermediate).total)
        assert fine.info["vol"] < 0.5 * res.info["vol"]
        assert fine.info["lat"] < 0.5 * res.info["lat"]

    @pytest.mark.parametrize("strategy,k", [("C", 10), ("E", 14)])
    def test_counts_and_closure(self, strategy, k):
        rc = coarse("expanding_sphere")
        cfg = SlabConfig(h_box=2.5, h_shape=1.0, strategy=strategy)
        m = generate_initial_hypermesh(rc.scene, 2.5, 1.0)
        tris, _ = extract_boundary_triangles(m)
        slab = build_slab_3d(m, rc.scene, 0.0, 1.0, cfg)
        assert slab.intermediate.n_cells == k * len(tris)
        assert slab.info["tets_per_prism"] == k
        rep = hull_closure_check(slab.hull)
        assert rep.closed and rep.net_normal_rel <= 1e-9
        assert np.all(slab.hull.patch[slab.hull.patch == Patch.INTERMEDIATE] == Patch.INTERMEDIATE)

    def test_rotating_eight_slabs_final_volume(self):
        rc = coarse("rotating_ellipsoid", h_box=1.6, h_shape=0.8)
        # coarser sizing folds tetrahedra in a few prisms near the tips
        res = run(rc)
        assert len(res.slabs) == 8
        for a, b in zip(res.slabs, res.slabs[1:]):
            assert np.array_equal(a.terminating.vertices, b.initial.vertices)
            assert np.array_equal(a.terminating.cells, b.initial.cells)
        assert abs(res.approx - (4096 - 8 * math.pi)) / 4096 < 0.01
