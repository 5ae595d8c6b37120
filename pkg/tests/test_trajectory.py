import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import ellipsoid_implicit, rodrigues
from stslab.errors import InvalidInputError, OutOfDomainError
from stslab.geom_core import VertexTag
from stslab.kinematics import BoxDomain, MovingScene, MovingShape
from stslab.trajectory import TrajectoryConfig, advect_vertices

OBJ, BOX = int(VertexTag.OBJECT_BOUNDARY), int(VertexTag.BOX_BOUNDARY)


def rotating():
    return MovingScene(BoxDomain([-8] * 3, [8] * 3),
                       [MovingShape("ellipsoid", [0, 0, 0], semi_axes=[1, 3, 2],
                                    angular_velocity=[0, 0, math.pi / 2])])


def test_static_unchanged():
    sc = MovingScene(BoxDomain([0, 0], [10, 10]), [MovingShape("circle", [5, 5], radius=1.0)])
    X = np.array([[6.0, 5.0], [5.0, 4.0]])
    for M in (1, 7, 64):
        out = advect_vertices(X, [OBJ, OBJ], [0, 0], sc, 0.0, 1.0, TrajectoryConfig(substeps=M))
        assert np.allclose(out, X, atol=1e-15)


def test_expanding_final_radius():
    sc = MovingScene(BoxDomain([-5, -5], [5, 5]),
                     [MovingShape("circle", [0, 0], radius=1.0, expansion_rate=0.25)])
    out = advect_vertices([[1.0, 0.0]], [OBJ], [0], sc, 0.0, 1.0)
    assert np.linalg.norm(out[0]) == pytest.approx(1.25, abs=1e-15)


def test_rotation_m1024_close_to_exact():
    cfg = TrajectoryConfig(substeps=1024, terminal_projection=False)
    out = advect_vertices([[1.0, 0, 0]], [OBJ], [0], rotating(), 0.0, 1.0, cfg)
    exact = rodrigues([0, 0, math.pi / 2], 1.0) @ np.array([1.0, 0, 0])
    assert np.linalg.norm(out[0] - exact) < 1e-3 * 3


def test_box_vertices_and_order_preserved():
    sc = rotating()
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(20, 3))
    Y /= np.sqrt(np.sum((Y / sc.shapes[0].semi_axes) ** 2, axis=1))[:, None]
    X = np.vstack([[[-8, 0, 0], [8, 8, 8]], Y])
    tags = [BOX, BOX] + [OBJ] * 20
    owners = [-1, -1] + [0] * 20
    out = advect_vertices(X, tags, owners, sc, 0.0, 0.25)
    assert out.shape == X.shape
    assert np.array_equal(out[:2], X[:2])
    exact = Y @ rodrigues([0, 0, math.pi / 2], 0.25).T
    assert np.max(np.linalg.norm(out[2:] - exact, axis=1)) < 1e-2


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 64), st.booleans())
def test_terminal_projection_on_surface(seed, M, each):
    sc = rotating()
    s = sc.shapes[0]
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(8, 3))
    Y /= np.sqrt(np.sum((Y / s.semi_axes) ** 2, axis=1))[:, None]
    t1 = float(rng.uniform(0.05, 0.3))
    out = advect_vertices(Y, [OBJ] * 8, [0] * 8, sc, 0.0, t1,
                          TrajectoryConfig(substeps=M, project_each_substep=each))
    phi = ellipsoid_implicit(out, s.center, s.semi_axes, rodrigues(s.angular_velocity, t1))
    assert np.max(np.abs(phi)) <= 1e-10


def test_euler_first_order():
    x0 = np.array([[1.0, 0, 0]])
    exact = rodrigues([0, 0, math.pi / 2], 1.0) @ x0[0]
    errs = []
    for M in (32, 64, 128, 256):
        cfg = TrajectoryConfig(substeps=M, terminal_projection=False)
        errs.append(np.linalg.norm(advect_vertices(x0, [OBJ], [0], rotating(), 0.0, 1.0, cfg)[0] - exact))
    for a, b in zip(errs, errs[1:]):
        assert 1.8 <= a / b <= 2.2


def test_out_of_domain():
    sc = MovingScene(BoxDomain([-2, -2], [2, 2]),
                     [MovingShape("circle", [0, 0], radius=1.0, expansion_rate=0.25)])
    with pytest.raises(OutOfDomainError):
        advect_vertices([[1.0, 0]], [OBJ], [0], sc, 0.0, 8.0)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        TrajectoryConfig(substeps=0)
    with pytest.raises(InvalidInputError):
        TrajectoryConfig(integrator="rk4")
    with pytest.raises(InvalidInputError):
        advect_vertices([[1.0, 0]], [OBJ], [0], rotating(), 1.0, 1.0)
