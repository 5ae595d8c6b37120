"""Analytic moving-boundary scenes.

A scene is an axis-aligned box holding circles (2D), spheres or
ellipsoids (3D). Circles and spheres follow the radius law
``R(t) = m * t + R0``. Ellipsoids rotate rigidly about their centre with a
constant angular velocity; their semi-axes are aligned with the
coordinate axes at ``t = 0``.

Every shape is described by the quadratic implicit function
``phi(x, t) = sum((y_i / a_i)^2) - 1`` in its body frame (``a_i = R`` for
circles and spheres), negative inside and positive outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidInputError, InvalidTagError, ProjectionError, SingularDirectionError

PROJECTION_TOL = 1e-12
PROJECTION_MAX_ITER = 100
DISJOINT_SAMPLE_TIMES = 64


class ShapeKind(str, Enum):
    CIRCLE = "circle"
    SPHERE = "sphere"
    ELLIPSOID = "ellipsoid"


@dataclass(frozen=True)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        if lo.shape != hi.shape or lo.ndim != 1 or len(lo) not in (2, 3):
            raise InvalidInputError("box bounds must be 2- or 3-vectors of equal length")
        if not np.all(lo < hi):
            raise InvalidInputError(f"box lower {lo.tolist()} must be below upper {hi.tolist()}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, X, tol: float = 0.0) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=1)


def rotation_matrix(omega, t: float) -> np.ndarray:
    """Rotation by angle ``|omega| * t`` about ``omega`` (Rodrigues)."""
    w = np.asarray(omega, float)
    theta = float(np.linalg.norm(w)) * t
    if theta == 0.0:
        return np.eye(3)
    k = w / np.linalg.norm(w)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(theta) * K + (1 - math.cos(theta)) * (K @ K)


@dataclass(frozen=True)
class MovingShape:
    kind: ShapeKind
    center: np.ndarray
    radius: float | None = None
    expansion_rate: float = 0.0
    semi_axes: np.ndarray | None = None
    angular_velocity: np.ndarray | None = None

    def __post_init__(self):
        kind = ShapeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        c = np.asarray(self.center, float)
        object.__setattr__(self, "center", c)
        if kind is ShapeKind.ELLIPSOID:
            if self.radius is not None or self.expansion_rate:
                raise InvalidInputError("ellipsoids take semi_axes and angular_velocity, not a radius law")
            if self.semi_axes is None:
                raise InvalidInputError("ellipsoid requires semi_axes")
            a = np.asarray(self.semi_axes, float)
            if a.shape != (3,) or not np.all(a > 0):
                raise InvalidInputError(f"semi_axes must be three positive reals, got {a.tolist()}")
            w = np.zeros(3) if self.angular_velocity is None else np.asarray(self.angular_velocity, float)
            if w.shape != (3,):
                raise InvalidInputError("angular_velocity must be a 3-vector")
            object.__setattr__(self, "semi_axes", a)
            object.__setattr__(self, "angular_velocity", w)
            if c.shape != (3,):
                raise InvalidInputError("ellipsoid centre must be a 3-vector")
        else:
            if self.semi_axes is not None or self.angular_velocity is not None:
                raise InvalidInputError(f"{kind.value} takes a radius law, not semi_axes/angular_velocity")
            if self.radius is None or not self.radius > 0:
                raise InvalidInputError(f"{kind.value} radius must be positive, got {self.radius}")
            want = 2 if kind is ShapeKind.CIRCLE else 3
            if c.shape != (want,):
                raise InvalidInputError(f"{kind.value} centre must be a {want}-vector")
            object.__setattr__(self, "radius", float(self.radius))
            object.__setattr__(self, "expansion_rate", float(self.expansion_rate))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def is_ellipsoid(self) -> bool:
        return self.kind is ShapeKind.ELLIPSOID

    def radius_at(self, t: float) -> float:
        return self.expansion_rate * t + self.radius

    def axes_at(self, t: float) -> np.ndarray:
        if self.is_ellipsoid:
            return self.semi_axes
        return np.full(self.dim, self.radius_at(t))

    def rotation_at(self, t: float) -> np.ndarray:
        if self.is_ellipsoid:
            return rotation_matrix(self.angular_velocity, t)
        return np.eye(self.dim)

    def to_body(self, X, t: float) -> np.ndarray:
        Y = np.atleast_2d(X) - self.center
        if self.is_ellipsoid:
            Y = Y @ self.rotation_at(t)
        return Y

    def from_body(self, Y, t: float) -> np.ndarray:
        if self.is_ellipsoid:
            Y = Y @ self.rotation_at(t).T
        return Y + self.center

    def implicit(self, X, t: float) -> np.ndarray:
        """``sum((y / a)^2) - 1``; quadratic along any straight segment."""
        Y = self.to_body(X, t)
        return np.sum((Y / self.axes_at(t)) ** 2, axis=1) - 1.0

    def min_feature(self, t: float = 0.0) -> float:
        return float(np.min(self.axes_at(t)))

    def volume(self, t: float) -> float:
        a = self.axes_at(t)
        return float(math.pi * a[0] * a[1]) if self.dim == 2 else float(4.0 / 3.0 * math.pi * np.prod(a))

    def surface_samples(self, t: float, n: int) -> np.ndarray:
        if self.dim == 2:
            th = 2 * math.pi * np.arange(n) / n
            Y = np.column_stack([np.cos(th), np.sin(th)])
        else:
            k = np.arange(n) + 0.5
            z = 1 - 2 * k / n
            r = np.sqrt(1 - z * z)
            phi = math.pi * (3 - math.sqrt(5)) * k
            Y = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
        return self.from_body(Y * self.axes_at(t), t)


@dataclass(frozen=True)
class MovingScene:
    box: BoxDomain
    shapes: tuple = field(default_factory=tuple)
    t0: float = 0.0
    tf: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "tf", float(self.tf))

    @property
    def dim(self) -> int:
        return self.box.dim

    def validate(self, n_times: int = DISJOINT_SAMPLE_TIMES) -> None:
        """Check radius laws, dimensions, containment and disjointness."""
        if not self.tf > self.t0:
            raise InvalidInputError(f"tf ({self.tf}) must exceed t0 ({self.t0})")
        for i, s in enumerate(self.shapes):
            if s.dim != self.dim:
                raise InvalidInputError(f"shape {i} is {s.dim}D in a {self.dim}D box")
            if not s.is_ellipsoid:
                for t in (self.t0, self.tf):
                    if not s.radius_at(t) > 0:
                        raise InvalidInputError(f"shape {i} radius non-positive at t={t}")
        n_samples = 256 if self.dim == 2 else 2000
        for t in np.linspace(self.t0, self.tf, n_times):
            samples = [s.surface_samples(t, n_samples) for s in self.shapes]
            for i, S in enumerate(samples):
                inside = np.all((S > self.box.lower) & (S < self.box.upper), axis=1)
                if not inside.all():
                    raise InvalidInputError(f"shape {i} leaves the box at t={t:.6g}")
                for j, other in enumerate(self.shapes):
                    if j != i and np.any(other.implicit(S, t) <= 0):
                        raise InvalidInputError(f"shapes {i} and {j} intersect at t={t:.6g}")


def boundary_velocity_many(shape: MovingShape, X, t: float) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    if shape.is_ellipsoid:
        return np.cross(shape.angular_velocity, X - shape.center)
    if shape.expansion_rate == 0.0:
        return np.zeros_like(X)
    d = X - shape.center
    r = np.linalg.norm(d, axis=1)
    if np.any(r <= 1e-14 * max(1.0, shape.radius)):
        raise SingularDirectionError("radial direction undefined at the shape centre")
    return shape.expansion_rate * d / r[:, None]


def boundary_velocity(scene: MovingScene, shape_index: int, x, t: float) -> np.ndarray:
    """Velocity of the shape surface at ``x``."""
    return boundary_velocity_many(scene.shapes[shape_index], x, t)[0]


def _ellipsoid_closest(Y, a):
    """Closest points on the axis-aligned ellipsoid with semi-axes ``a``.

    Solves ``sum((a_i y_i / (a_i^2 + lam))^2) = 1`` for the Lagrange
    multiplier by bracketed Newton; ``x_i = a_i^2 y_i / (a_i^2 + lam)``.
    """
    a2 = a * a
    n = len(Y)
    amin2 = a2.min()
    kmin = int(np.argmin(a2))
    ynorm = np.linalg.norm(Y, axis=1)
    if np.any(ynorm == 0):
        raise SingularDirectionError("closest point undefined at the ellipsoid centre")
    lo = np.where(Y[:, kmin] != 0, -amin2 + np.sqrt(amin2) * np.abs(Y[:, kmin]), -amin2 * (1 - 1e-15))
    hi = np.maximum(0.0, a.max() * ynorm)
    # start from the radial estimate
    lam = np.clip(np.sqrt(np.sum((Y / a) ** 2, axis=1)) * amin2 - amin2, lo, hi)
    done = np.zeros(n, bool)
    for _ in range(PROJECTION_MAX_ITER):
        d = a2 + lam[:, None]
        q = a * Y / d
        f = np.sum(q * q, axis=1) - 1.0
        fp = -2.0 * np.sum(q * q / d, axis=1)
        lo = np.where(f > 0, lam, lo)
        hi = np.where(f < 0, lam, hi)
        step = np.where(fp != 0, f / fp, 0.0)
        new = lam - step
        bad = ~((new > lo) & (new < hi)) | ~np.isfinite(new)
        new = np.where(bad, 0.5 * (lo + hi), new)
        conv = np.abs(new - lam) <= PROJECTION_TOL * (1.0 + np.abs(lam))
        lam = np.where(done, lam, new)
        done |= conv | (f == 0)
        if done.all():
            break
    else:
        raise ProjectionError(f"ellipsoid projection did not converge for {int(np.sum(~done))} points")
    X = a2 * Y / (a2 + lam[:, None])
    s = np.sqrt(np.sum((X / a) ** 2, axis=1))
    return X / s[:, None]


def project_many(shape: MovingShape, X, t: float) -> np.ndarray:
    """Project points onto the shape surface at time ``t``."""
    X = np.atleast_2d(np.asarray(X, float))
    if shape.is_ellipsoid:
        Y = shape.to_body(X, t)
        return shape.from_body(_ellipsoid_closest(Y, shape.semi_axes), t)
    d = X - shape.center
    r = np.linalg.norm(d, axis=1)
    if np.any(r == 0):
        raise SingularDirectionError("projection undefined at the shape centre")
    return shape.center + shape.radius_at(t) * d / r[:, None]


def project_to_surface(scene: MovingScene, shape_index: int, x, t: float) -> np.ndarray:
    return project_many(scene.shapes[shape_index], x, t)[0]


@dataclass(frozen=True)
class BoxConstraint:
    """Active box faces at a point: pairs ``(axis, side)`` with side 0 for
    the lower and 1 for the upper bound."""

    faces: tuple

    @property
    def n_active(self) -> int:
        return len(self.faces)

    def fixed_axes(self) -> list:
        return sorted({ax for ax, _ in self.faces})


def box_face_constraint(scene: MovingScene, x, tol: float | None = None) -> BoxConstraint:
    x = np.asarray(x, float)
    box = scene.box
    if tol is None:
        tol = 1e-10 * box.diagonal
    faces = []
    for ax in range(box.dim):
        if abs(x[ax] - box.lower[ax]) <= tol:
            faces.append((ax, 0))
        elif abs(x[ax] - box.upper[ax]) <= tol:
            faces.append((ax, 1))
    if not faces:
        raise InvalidTagError(f"point {x.tolist()} is not on the box boundary")
    return BoxConstraint(tuple(faces))
