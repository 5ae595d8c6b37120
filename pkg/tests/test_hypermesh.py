import math

import numpy as np
import pytest

from oracles import box_minus_ellipsoids_volume, tet_volume_det
from stslab.errors import InitialMeshError
from stslab.geom_core import Patch, VertexTag, hull_closure_check, total_measure
from stslab.hypermesh import generate_initial_hypermesh, kuhn_grid, red_green_refine, signed_volumes
from stslab.io_formats import config_from_dict, load_initial_mesh, write_stmesh
from stslab.kinematics import BoxDomain, MovingScene
from stslab.scenes import benchmark
from stslab.slab3d import extract_boundary_triangles


def scene(name, **kw):
    return config_from_dict(benchmark(name, **kw)).scene


def oracle_volume(m):
    X = m.vertices[:, :3]
    return sum(tet_volume_det(*X[c]) for c in m.cells)


def test_empty_box_half_spacing():
    L = 10.0
    sc = MovingScene(BoxDomain([0, 0, 0], [L, L, L]), [], 0.0, 1.0)
    m = generate_initial_hypermesh(sc, L / 2, L / 2)
    assert m.n_cells == 48
    assert abs(oracle_volume(m) - L ** 3) <= 1e-12 * L ** 3
    assert np.all(m.vertices[:, 3] == 0.0)
    assert np.all(m.patch == int(Patch.TERMINATING))


def test_kuhn_grid_is_conforming():
    X, T = kuhn_grid([0, 0, 0], [2, 3, 1], 1.0)
    assert len(T) == 6 * 6
    assert np.all(signed_volumes(X, T) > 0)
    tris = boundary_faces(T)
    # boundary of a 2x3x1 box: 2 triangles per unit square
    assert len(tris) == 2 * 2 * (2 * 3 + 2 * 1 + 3 * 1)


def boundary_faces(T):
    """Faces used by exactly one tet, counted directly."""
    F = np.sort(np.concatenate([T[:, [1, 2, 3]], T[:, [0, 2, 3]], T[:, [0, 1, 3]], T[:, [0, 1, 2]]]),
                axis=1)
    uniq, counts = np.unique(F, axis=0, return_counts=True)
    assert counts.max() <= 2
    return uniq[counts == 1]


def test_red_green_preserves_volume():
    X, T = kuhn_grid([0, 0, 0], [2, 2, 2], 1.0)
    marked = np.zeros(len(T), bool)
    marked[:5] = True
    X2, T2 = red_green_refine(X, T, marked)
    assert len(T2) > len(T)
    v = np.abs(signed_volumes(X2, T2))
    assert abs(v.sum() - 8.0) < 1e-12
    assert np.all(v > 0)
    tris = boundary_faces(T2)
    # green closure leaves no hanging faces, so the boundary is the box surface
    area = sum(np.linalg.norm(np.cross(X2[b] - X2[a], X2[c] - X2[a])) / 2 for a, b, c in tris)
    assert abs(area - 24.0) < 1e-12


def test_sphere_shell_on_surface():
    sc = scene("stationary_sphere")
    m = generate_initial_hypermesh(sc, 1.0, 0.5)
    obj = m.vertex_tag == int(VertexTag.OBJECT_BOUNDARY)
    assert obj.sum() > 40
    r = np.linalg.norm(m.vertices[obj, :3] - 5.0, axis=1)
    assert np.max(np.abs(r - 1.0)) <= 1e-10
    assert np.all(m.owner[obj] == 0)
    assert np.all(signed_volumes(m.vertices[:, :3], m.cells) > 0)
    # box vertices stay on the box
    box = m.vertex_tag == int(VertexTag.BOX_BOUNDARY)
    X = m.vertices[box, :3]
    assert np.all(np.min(np.minimum(np.abs(X), np.abs(X - 10.0)), axis=1) <= 1e-12)


def test_sphere_volume_converges():
    sc = scene("stationary_sphere")
    exact = 1000.0 - 4.0 * math.pi / 3.0
    errs = []
    for hb, hs in ((2.0, 1.0), (1.0, 0.5), (0.5, 0.25)):
        m = generate_initial_hypermesh(sc, hb, hs)
        errs.append(abs(total_measure(m).total - exact))
    assert errs[0] > 2.5 * errs[1] and errs[1] > 2.5 * errs[2]
    assert errs[2] < 0.15


def test_ellipsoid_volume_matches_oracle():
    sc = scene("rotating_ellipsoid")
    m = generate_initial_hypermesh(sc, 1.6, 0.8)
    exact = box_minus_ellipsoids_volume([16, 16, 16], [(1.0, 3.0, 2.0)])
    assert abs(total_measure(m).total - exact) / exact < 2e-3
    obj = m.vertex_tag == int(VertexTag.OBJECT_BOUNDARY)
    assert np.max(np.abs(sc.shapes[0].implicit(m.vertices[obj, :3], 0.0))) < 1e-9


def test_hole_surface_closed():
    sc = scene("tandem_ellipsoids")
    m = generate_initial_hypermesh(sc, 2.0, 1.0)
    tris, _ = extract_boundary_triangles(m)
    assert len(tris) > 0
    owners = set(m.owner[m.vertex_tag == int(VertexTag.OBJECT_BOUNDARY)].tolist())
    assert owners == {0, 1}


def test_two_dimensional_scene_rejected():
    sc = scene("stationary_circle")
    with pytest.raises(InitialMeshError):
        generate_initial_hypermesh(sc, 1.0, 0.5)


def test_import_bypasses_generation(tmp_path):
    sc = scene("stationary_sphere")
    m = generate_initial_hypermesh(sc, 2.5, 1.0)
    flat = m.replace(vertices=m.vertices[:, :3].copy())
    write_stmesh(flat, tmp_path / "init.stmesh")
    back = load_initial_mesh(tmp_path / "init.stmesh", sc, 0.0)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.cells, m.cells)
    assert np.array_equal(back.owner, m.owner)
    assert np.array_equal(back.vertex_tag, m.vertex_tag)


def test_import_wrong_time_rejected(tmp_path):
    from stslab.errors import InvalidInputError
    sc = scene("stationary_sphere")
    m = generate_initial_hypermesh(sc, 2.5, 1.0)
    write_stmesh(m, tmp_path / "init.stmesh")
    with pytest.raises(InvalidInputError):
        load_initial_mesh(tmp_path / "init.stmesh", sc, 0.5)


def test_pipeline_with_initial_mesh(tmp_path):
    from stslab.pipeline import run
    sc = scene("stationary_sphere")
    m = generate_initial_hypermesh(sc, 2.5, 1.0)
    write_stmesh(m, tmp_path / "init.stmesh")
    doc = benchmark("stationary_sphere", sizing={"h_box": 2.5, "h_shape": 1.0})
    rc = config_from_dict(doc)
    rc.initial_mesh = str(tmp_path / "init.stmesh")
    a = run(rc)
    rc.initial_mesh = None
    b = run(rc)
    assert a.approx == b.approx
