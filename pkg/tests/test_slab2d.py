import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stslab.errors import InvalidInputError, InvalidMeshError, PipelineError
from stslab.geom_core import (Patch, SimplicialMesh, VertexTag, facet_census,
                              hull_closure_check, total_measure)
from stslab.io_formats import config_from_dict
from stslab.scenes import benchmark
from stslab.slab import SlabConfig, assemble_domain_boundary, lift
from stslab.slab2d import (build_intermediate_2d, build_slab_2d, circle_polygon,
                           circle_vertex_count, extract_boundary_edges,
                           generate_initial_plane_2d, run_slabs_2d)


def scene(name="stationary_circle"):
    return config_from_dict(benchmark(name)).scene


def ring(k, R=1.0, t=0.0, R1=None, t1=None):
    th = 2 * np.pi * np.arange(k) / k
    A = lift(R * np.column_stack([np.cos(th), np.sin(th)]), t)
    if R1 is None:
        return A
    return A, lift(R1 * np.column_stack([np.cos(th), np.sin(th)]), t1)


class TestBoundary:
    def test_square_one_loop(self):
        X = lift(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), 0.0)
        m = SimplicialMesh(X, [[0, 1, 2], [0, 2, 3]], vertex_tag=[1] * 4)
        edges, loops = extract_boundary_edges(m)
        assert len(edges) == 4 and len(loops) == 1 and loops[0].is_box

    def test_hole_two_loops_opposite(self):
        from stslab.slab2d import loop_signed_area
        m = generate_initial_plane_2d(scene(), SlabConfig(h_box=2.0, h_shape=0.5))
        _, loops = extract_boundary_edges(m)
        assert len(loops) == 2
        areas = {L.owner: loop_signed_area(m.vertices[L.vertices, :2]) for L in loops}
        assert areas[-1] > 0 > areas[0]

    def test_closed_surface_no_edges(self):
        X = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
        m = SimplicialMesh(X, [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
        edges, loops = extract_boundary_edges(m)
        assert len(edges) == 0 and loops == []

    def test_nonmanifold(self):
        X = lift(np.array([[0, 0], [1, 0], [0, 1], [0, -1], [1, 1]], float), 0.0)
        m = SimplicialMesh(X, [[0, 1, 2], [0, 3, 1], [0, 1, 4]])
        with pytest.raises(InvalidMeshError):
            extract_boundary_edges(m)


class TestIntermediate:
    def test_unit_edge(self):
        A = np.array([[0, 0, 0], [1, 0, 0]], float)
        B = A + [0, 0, 1]
        m = build_intermediate_2d([A], [B], closed=False)
        assert m.n_cells == 4
        assert total_measure(m).total == pytest.approx(1.0, rel=1e-14)
        assert np.all(m.patch == Patch.INTERMEDIATE)

    def test_cylinder_64(self):
        A, B = ring(64, 1.0, 0.0, 1.0, 1.0)
        m = build_intermediate_2d([A], [B])
        area = total_measure(m).total
        assert m.n_cells == 256
        assert abs(area - 2 * math.pi) / (2 * math.pi) < 2e-3
        assert area == pytest.approx(128 * math.sin(math.pi / 64), rel=1e-12)

    @pytest.mark.parametrize("k", [64, 256, 1024])
    def test_frustum(self, k):
        R0, Rf, dt = 1.0, 1.25, 1.0
        A, B = ring(k, R0, 0.0, Rf, dt)
        area = total_measure(build_intermediate_2d([A], [B])).total
        exact = math.pi * (Rf + R0) * math.hypot(Rf - R0, dt)
        assert abs(area - exact) / exact < 25.0 / k ** 2

    def test_mismatch(self):
        A, B = ring(8), ring(9, t=1.0)
        with pytest.raises(PipelineError):
            build_intermediate_2d([A], [B])

    def test_nonconvex_quad_rejected(self):
        A = np.array([[0, 0, 0], [1, 0, 0]], float)
        B = np.array([[1, 0, 1], [0, 0, 1]], float)  # bow-tie
        with pytest.raises(PipelineError):
            build_intermediate_2d([A], [B], closed=False)

    @given(st.integers(16, 200), st.floats(0.1, 2.0), st.floats(0.05, 2.0))
    def test_static_area_is_perimeter_times_dt(self, k, R, ratio):
        # Heron loses ~eps (dt / edge)^2 on needle triangles, so dt is tied
        # to the edge length as in the benchmark slabs
        edge = 2 * R * math.sin(math.pi / k)
        dt = edge / ratio
        A, B = ring(k, R, 0.0, R, dt)
        area = total_measure(build_intermediate_2d([A], [B])).total
        perim = float(np.sum(np.linalg.norm(A[:, :2] - np.roll(A[:, :2], -1, axis=0), axis=1)))
        assert abs(area - perim * dt) <= 1e-12 * perim * dt


class TestSlab:
    def test_stationary_one_slab(self):
        sc = scene()
        cfg = SlabConfig(h_box=1.0, h_shape=0.35)
        init = generate_initial_plane_2d(sc, cfg)
        slab = build_slab_2d(init, sc, 0.0, 1.0, cfg)
        assert slab.closure.closed
        _, counts = facet_census(slab.hull.cells)
        assert np.all(counts == 2)
        assert np.allclose(slab.initial.vertices[:, 2], 0.0, atol=1e-12)
        assert np.allclose(slab.terminating.vertices[:, 2], 1.0, atol=1e-12)
        whole = assemble_domain_boundary([slab], cfg.tol_for(sc))
        assert abs(total_measure(whole).total - 240.0) / 240.0 < 0.05
        fine = SlabConfig(h_box=0.5, h_shape=0.175)
        whole_f = assemble_domain_boundary(run_slabs_2d(sc, fine, [0.0, 1.0]), fine.tol_for(sc))
        assert abs(total_measure(whole_f).total - 240) < abs(total_measure(whole).total - 240)

    def test_zero_duration(self):
        sc = scene()
        cfg = SlabConfig(h_box=2.0, h_shape=0.5)
        with pytest.raises(InvalidInputError):
            build_slab_2d(generate_initial_plane_2d(sc, cfg), sc, 0.0, 0.0, cfg)

    def test_expanding_four_slabs_conform(self):
        sc = scene("expanding_circle")
        cfg = SlabConfig(h_box=2.0, h_shape=0.5)
        slabs = run_slabs_2d(sc, cfg, np.linspace(0, 1, 5))
        for a, b in zip(slabs, slabs[1:]):
            assert np.array_equal(a.terminating.vertices, b.initial.vertices)
            assert np.array_equal(a.terminating.cells, b.initial.cells)
            assert np.array_equal(a.terminating.vertex_tag, b.initial.vertex_tag)
        for s in slabs:
            assert hull_closure_check(s.hull).closed
            obj = s.terminating.vertex_tag == int(VertexTag.OBJECT_BOUNDARY)
            r = np.linalg.norm(s.terminating.vertices[obj, :2] - 5.0, axis=1)
            assert np.allclose(r, 1.0 + 0.25 * s.t_np1, rtol=1e-12)
        whole = assemble_domain_boundary(slabs, cfg.tol_for(sc))
        assert hull_closure_check(whole).closed

    def test_circle_vertex_count(self):
        assert circle_vertex_count(1.0, 1.0) == 16
        assert circle_vertex_count(1.0, 0.1) == math.ceil(20 * math.pi)
        s = scene().shapes[0]
        P = circle_polygon(s, 0.0, 0.35)
        assert np.allclose(np.linalg.norm(P - 5.0, axis=1), 1.0)
