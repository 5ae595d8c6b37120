import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import ellipsoid_implicit, rodrigues
from stslab.errors import InvalidInputError, InvalidTagError, SingularDirectionError
from stslab.kinematics import (BoxDomain, MovingScene, MovingShape, box_face_constraint,
                               boundary_velocity, project_many, project_to_surface,
                               rotation_matrix)

HALF_PI = math.pi / 2


def circle_scene(m=0.0):
    return MovingScene(BoxDomain([0, 0], [10, 10]),
                       [MovingShape("circle", [5, 5], radius=1.0, expansion_rate=m)])


def ellipsoid_scene(w=(0, 0, HALF_PI), axes=(1, 3, 2)):
    return MovingScene(BoxDomain([-8] * 3, [8] * 3),
                       [MovingShape("ellipsoid", [0, 0, 0], semi_axes=axes, angular_velocity=w)])


class TestVelocity:
    def test_static(self):
        assert np.array_equal(boundary_velocity(circle_scene(), 0, [6.3, 5.1], 0.5), [0, 0])

    def test_expanding(self):
        v = boundary_velocity(circle_scene(0.25), 0, [6, 5], 0.0)
        assert np.allclose(v, [0.25, 0], atol=1e-15)

    def test_rotating(self):
        v = boundary_velocity(ellipsoid_scene(), 0, [1, 0, 0], 0.0)
        assert np.allclose(v, [0, HALF_PI, 0], atol=1e-15)

    def test_singular_centre(self):
        with pytest.raises(SingularDirectionError):
            boundary_velocity(circle_scene(0.25), 0, [5, 5], 0.0)

    @given(st.floats(0, 1), st.floats(0, 2 * math.pi), st.floats(0.05, math.pi - 0.05))
    def test_velocity_tangent_to_moving_surface(self, t, u, v):
        # d/dt phi(x(t), t) along v = omega x r vanishes on the surface
        sc = ellipsoid_scene()
        s = sc.shapes[0]
        a = s.semi_axes
        y = np.array([a[0] * math.cos(u) * math.sin(v), a[1] * math.sin(u) * math.sin(v),
                      a[2] * math.cos(v)])
        R = rodrigues(s.angular_velocity, t)
        x = R @ y
        vel = boundary_velocity(sc, 0, x, t)
        eps = 1e-6
        fwd = ellipsoid_implicit((x + eps * vel)[None], s.center, a, rodrigues(s.angular_velocity, t + eps))
        bwd = ellipsoid_implicit((x - eps * vel)[None], s.center, a, rodrigues(s.angular_velocity, t - eps))
        assert abs((fwd - bwd)[0] / (2 * eps)) < 1e-5


class TestProjection:
    def test_circle(self):
        assert np.allclose(project_to_surface(circle_scene(), 0, [7, 5], 0.0), [6, 5], atol=1e-15)

    def test_sphere_fixed_point(self):
        sc = MovingScene(BoxDomain([0] * 3, [10] * 3),
                         [MovingShape("sphere", [5, 5, 5], radius=1.0, expansion_rate=0.25)])
        x = np.array([5, 5, 5]) + 1.25 * np.array([0.6, 0.0, 0.8])
        p = project_to_surface(sc, 0, x, 1.0)
        assert np.max(np.abs(p - x)) <= 1e-15 * 8

    def test_ellipsoid_on_axis(self):
        sc = ellipsoid_scene(w=(0, 0, 0))
        p = project_to_surface(sc, 0, [1.1, 0, 0], 0.0)
        assert np.allclose(p, [1, 0, 0], atol=1e-12)

    def test_ellipsoid_against_sampling(self):
        sc = ellipsoid_scene()
        s = sc.shapes[0]
        t = 0.3
        rng = np.random.default_rng(5)
        u, v = np.meshgrid(np.linspace(0, 2 * np.pi, 1200), np.linspace(0, np.pi, 600))
        Y = np.column_stack([np.cos(u).ravel() * np.sin(v).ravel(), 3 * np.sin(u).ravel() * np.sin(v).ravel(),
                             2 * np.cos(v).ravel()])
        S = Y @ rodrigues(s.angular_velocity, t).T
        for _ in range(10):
            x = S[rng.integers(len(S))] * rng.uniform(0.85, 1.15)
            p = project_to_surface(sc, 0, x, t)
            dmin = np.min(np.linalg.norm(S - x, axis=1))
            assert np.linalg.norm(p - x) <= dmin + 1e-9
            assert np.linalg.norm(p - x) >= dmin - 5e-3

    @given(st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.8, 1.2))
    def test_ellipsoid_projection_on_surface_and_idempotent(self, t, x, y, z, scale):
        d = np.array([x, y, z])
        if np.linalg.norm(d) < 0.1:
            d = np.array([1.0, 0.2, 0.1])
        sc = ellipsoid_scene()
        s = sc.shapes[0]
        R = rodrigues(s.angular_velocity, t)
        Yb = d / np.sqrt(np.sum((d / s.semi_axes) ** 2))
        p0 = R @ (Yb * scale)
        p = project_to_surface(sc, 0, p0, t)
        assert abs(ellipsoid_implicit(p[None], s.center, s.semi_axes, R)[0]) <= 1e-10
        q = project_to_surface(sc, 0, p, t)
        assert np.linalg.norm(q - p) < 1e-12

    @given(st.floats(0, 1), st.floats(-2, 2), st.floats(-2, 2))
    def test_expanding_radius_exact(self, t, x, y):
        if math.hypot(x, y) < 1e-3:
            x = 1.0
        s = circle_scene(0.25).shapes[0]
        p = project_many(s, [[5 + x, 5 + y]], t)[0]
        r = np.linalg.norm(p - s.center)
        assert abs(r - s.radius_at(t)) <= 1e-12 * s.radius_at(t)


class TestBox:
    @pytest.mark.parametrize("x,n", [([0, 0, 0], 3), ([5, 5, 0], 1), ([5, 0, 10], 2)])
    def test_active_faces(self, x, n):
        sc = MovingScene(BoxDomain([0] * 3, [10] * 3), [])
        assert box_face_constraint(sc, x).n_active == n

    def test_interior_raises(self):
        sc = MovingScene(BoxDomain([0] * 3, [10] * 3), [])
        with pytest.raises(InvalidTagError):
            box_face_constraint(sc, [5, 5, 5])

    def test_bad_box(self):
        with pytest.raises(InvalidInputError):
            BoxDomain([0, 1], [1, 0])


class TestScene:
    def test_shape_both_laws_rejected(self):
        with pytest.raises(InvalidInputError):
            MovingShape("ellipsoid", [0, 0, 0], radius=1.0, semi_axes=[1, 2, 3])
        with pytest.raises(InvalidInputError):
            MovingShape("sphere", [0, 0, 0], radius=1.0, semi_axes=[1, 2, 3])

    def test_negative_radius_rejected(self):
        sc = MovingScene(BoxDomain([0, 0], [10, 10]),
                         [MovingShape("circle", [5, 5], radius=1.0, expansion_rate=-2.0)])
        with pytest.raises(InvalidInputError):
            sc.validate()

    def test_overlap_rejected(self):
        sc = MovingScene(BoxDomain([0, 0], [10, 10]),
                         [MovingShape("circle", [4, 5], radius=1.0),
                          MovingShape("circle", [5.5, 5], radius=1.0)])
        with pytest.raises(InvalidInputError, match="intersect"):
            sc.validate()

    def test_leaving_box_rejected(self):
        sc = MovingScene(BoxDomain([0, 0], [10, 10]),
                         [MovingShape("circle", [5, 5], radius=1.0, expansion_rate=5.0)])
        with pytest.raises(InvalidInputError, match="leaves"):
            sc.validate()

    def test_tandem_valid(self):
        from stslab.io_formats import config_from_dict
        from stslab.scenes import benchmark
        config_from_dict(benchmark("tandem_ellipsoids")).scene.validate()

    def test_rotation_matches_rodrigues(self):
        w = np.array([0.3, -1.2, 0.7])
        assert np.allclose(rotation_matrix(w, 0.8), rodrigues(w, 0.8), atol=1e-15)
