"""Vertex advection through one time slab."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, OutOfDomainError
from .geom_core import VertexTag
from .kinematics import MovingScene, boundary_velocity_many, project_many


def forward_euler(x, velocity, t, dt):
    return x + dt * velocity(x, t)


INTEGRATORS = {"forward_euler": forward_euler}


@dataclass(frozen=True)
class TrajectoryConfig:
    substeps: int = 32
    project_each_substep: bool = False
    terminal_projection: bool = True
    integrator: str = "forward_euler"

    def __post_init__(self):
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise InvalidInputError(f"substeps must be an integer >= 1, got {self.substeps}")
        if self.integrator not in INTEGRATORS:
            raise InvalidInputError(f"unknown integrator {self.integrator!r}")


def advect_vertices(X, tags, owners, scene: MovingScene, t_n: float, t_np1: float,
                    cfg: TrajectoryConfig = TrajectoryConfig()) -> np.ndarray:
    """Move object-boundary vertices from ``t_n`` to ``t_np1``.

    Each object vertex takes ``cfg.substeps`` integrator steps along the
    velocity of its owning shape, then is projected onto that shape at
    ``t_np1``. Box and interior vertices are returned unchanged. Row ``i``
    of the result corresponds to row ``i`` of ``X``.
    """
    if not t_np1 > t_n:
        raise InvalidInputError(f"t_np1 ({t_np1}) must exceed t_n ({t_n})")
    X = np.array(X, dtype=float, copy=True)
    tags = np.asarray(tags)
    owners = np.asarray(owners)
    step = INTEGRATORS[cfg.integrator]
    M = int(cfg.substeps)
    h = (t_np1 - t_n) / M
    obj = tags == int(VertexTag.OBJECT_BOUNDARY)
    for k in np.unique(owners[obj]):
        sel = np.nonzero(obj & (owners == k))[0]
        shape = scene.shapes[int(k)]
        x = X[sel]
        vel = lambda y, t, s=shape: boundary_velocity_many(s, y, t)
        for j in range(M):
            t = t_n + j * h
            x = step(x, vel, t, h)
            if cfg.project_each_substep:
                x = project_many(shape, x, t + h)
        if cfg.terminal_projection:
            x = project_many(shape, x, t_np1)
        out = ~scene.box.contains(x)
        if out.any():
            raise OutOfDomainError(f"{int(out.sum())} vertices of shape {int(k)} left the box")
        X[sel] = x
    return X
