"""Types shared by the 2D+t and 3D+t slab pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geom_core import Patch, SimplicialMesh, concatenate, merge_and_synchronize
from .trajectory import TrajectoryConfig

DEFAULT_MERGE_REL_TOL = 1e-10


@dataclass(frozen=True)
class SlabConfig:
    """Per-slab pipeline settings.

    ``h_box`` and ``h_shape`` are the target edge lengths at the box and at
    the moving shapes. ``terminating`` selects the terminating-hyperplane
    mesher in 3D (``None`` for topology transfer).
    """

    h_box: float
    h_shape: float
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    merge_tol: float | None = None
    engine: str = "auto"
    seed: int = 0
    min_angle: float = 20.0
    strategy: str = "E"
    terminating: object = None
    check_conformity: bool = True

    def __post_init__(self):
        if not (self.h_box > 0 and self.h_shape > 0):
            raise InvalidInputError("sizes must be positive")
        if self.strategy not in ("C", "E"):
            raise InvalidInputError(f"unknown split strategy {self.strategy!r}")

    def tol_for(self, scene) -> float:
        if self.merge_tol is not None:
            return float(self.merge_tol)
        return DEFAULT_MERGE_REL_TOL * scene.box.diagonal


@dataclass
class Slab:
    t_n: float
    t_np1: float
    initial: SimplicialMesh
    intermediate: SimplicialMesh
    terminating: SimplicialMesh
    hull: SimplicialMesh
    closure: object = None
    info: dict = field(default_factory=dict)


def reversed_cells(mesh: SimplicialMesh) -> SimplicialMesh:
    """Same simplices with the opposite orientation."""
    c = mesh.cells.copy()
    c[:, [0, 1]] = c[:, [1, 0]]
    return mesh.replace(cells=c)


def lift(X: np.ndarray, t: float) -> np.ndarray:
    return np.column_stack([X, np.full(len(X), float(t))])


def assemble_domain_boundary(slabs, tol: float) -> SimplicialMesh:
    """Boundary of the whole space-time domain: the first initial plane,
    every intermediate surface and the last terminating plane."""
    if not slabs:
        raise InvalidInputError("no slabs to assemble")
    parts = [reversed_cells(slabs[0].initial).with_patch(Patch.INITIAL)]
    parts += [s.intermediate for s in slabs]
    parts.append(slabs[-1].terminating.with_patch(Patch.TERMINATING))
    return merge_and_synchronize(parts, tol)


def compact(mesh: SimplicialMesh) -> SimplicialMesh:
    """Drop vertices no cell references."""
    used = np.zeros(mesh.n_vertices, bool)
    used[mesh.cells.ravel()] = True
    if used.all():
        return mesh
    new = np.cumsum(used) - 1
    return SimplicialMesh(mesh.vertices[used], new[mesh.cells], mesh.vertex_tag[used],
                          mesh.patch, mesh.owner[used])


__all__ = ["SlabConfig", "Slab", "reversed_cells", "lift", "assemble_domain_boundary",
           "compact", "concatenate"]
