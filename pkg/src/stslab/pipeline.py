"""Config-driven runs: slab sequences, measured quantities and ladders."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError
from .geom_core import SimplicialMesh, total_measure
from .io_formats import RunConfig, load_initial_mesh
from .slab import SlabConfig, assemble_domain_boundary
from .slab2d import run_slabs_2d
from .slab3d import ExternalMesher, TetGenMesher, TopologyTransfer, run_slabs_3d
from .verify import Case, ConvergenceLadder, exact_measure, fit_rate

log = logging.getLogger(__name__)


def terminating_strategy(rc: RunConfig, h_box: float):
    if rc.terminating == "topology_transfer":
        return TopologyTransfer()
    if rc.terminating == "laplacian":
        return TopologyTransfer(interior="laplacian")
    if rc.terminating == "tetgen":
        return TetGenMesher(h=h_box)
    if rc.terminating == "external":
        return ExternalMesher(rc.external_command)
    raise InvalidInputError(f"unknown terminating mesher {rc.terminating!r}")


def slab_config(rc: RunConfig, h_box: float | None = None, h_shape: float | None = None) -> SlabConfig:
    hb = rc.h_box if h_box is None else h_box
    hs = rc.h_shape if h_shape is None else h_shape
    return SlabConfig(h_box=hb, h_shape=hs, trajectory=rc.trajectory, merge_tol=rc.merge_tol,
                      engine=rc.engine, seed=rc.seed, min_angle=rc.min_angle,
                      strategy=rc.strategy, terminating=terminating_strategy(rc, hb))


def infer_case(rc: RunConfig) -> Case | None:
    if rc.case:
        return Case(rc.case)
    shapes = rc.scene.shapes
    if not shapes:
        return None
    kinds = {s.kind.value for s in shapes}
    if kinds == {"ellipsoid"}:
        return Case.ROTATING_ELLIPSOID if len(shapes) == 1 else Case.TANDEM_ELLIPSOIDS
    if len(shapes) != 1:
        return None
    s = shapes[0]
    moving = s.expansion_rate != 0.0
    if s.kind.value == "circle":
        return Case.EXPANDING_CIRCLE if moving else Case.STATIONARY_CIRCLE
    return Case.EXPANDING_SPHERE if moving else Case.STATIONARY_SPHERE


def exact_for(rc: RunConfig) -> float | None:
    """Closed-form value of the measured quantity, or None if the scene is
    not one of the benchmark families (the box must be a square/cube)."""
    case = infer_case(rc)
    ext = rc.scene.box.extent
    if case is None or not np.allclose(ext, ext[0]):
        return None
    L = float(ext[0])
    sc = rc.scene
    if case in (Case.ROTATING_ELLIPSOID, Case.TANDEM_ELLIPSOIDS):
        if rc.measure != "final_plane":
            return None
        return exact_measure(case, L, semi_axes=[s.semi_axes for s in sc.shapes], t0=sc.t0, tf=sc.tf)
    if rc.measure != "domain_boundary":
        return None
    s = sc.shapes[0]
    return exact_measure(case, L, R=s.radius, R0=s.radius, m=s.expansion_rate, t0=sc.t0, tf=sc.tf)


@dataclass
class RunResult:
    slabs: list
    measured: SimplicialMesh
    approx: float
    exact: float | None
    seconds: float
    h_box: float
    h_shape: float
    n_slabs: int
    info: dict = field(default_factory=dict)

    @property
    def error(self) -> float | None:
        return None if self.exact is None else abs(self.exact - self.approx)


def run(rc: RunConfig, h_box: float | None = None, h_shape: float | None = None,
        n_slabs: int | None = None) -> RunResult:
    """Build all slabs for ``rc`` and measure the configured quantity."""
    cfg = slab_config(rc, h_box, h_shape)
    n = rc.slabs if n_slabs is None else int(n_slabs)
    times = np.linspace(rc.scene.t0, rc.scene.tf, n + 1)
    rc.scene.validate()
    t = time.perf_counter()
    initial = None
    if rc.initial_mesh is not None:
        initial = load_initial_mesh(rc.initial_mesh, rc.scene, rc.scene.t0)
    if rc.scene.dim == 2:
        slabs = run_slabs_2d(rc.scene, cfg, times, initial)
    else:
        slabs = run_slabs_3d(rc.scene, cfg, times, initial)
    if rc.measure == "final_plane":
        measured = slabs[-1].terminating
    else:
        measured = assemble_domain_boundary(slabs, cfg.tol_for(rc.scene))
    rep = total_measure(measured)
    elapsed = time.perf_counter() - t
    log.info("h_box=%g h_shape=%g slabs=%d cells=%d measure=%.12g (%.1fs)",
             cfg.h_box, cfg.h_shape, n, rep.cell_count, rep.total, elapsed)
    return RunResult(slabs, measured, rep.total, exact_for(rc), elapsed, cfg.h_box, cfg.h_shape, n)


def ladder_levels(rc: RunConfig, levels: int, factor: float):
    """``(h_box, h_shape, n_slabs)`` per level, coarsest first.

    3D runs measured over the whole domain boundary refine the slab count
    with the spatial sizes, so the element count scales like h^-3.
    """
    if levels < 3:
        raise InvalidInputError("a convergence ladder needs at least 3 levels")
    if not 1.25 <= factor <= 2.0:
        raise InvalidInputError("refinement factor must lie in [1.25, 2.0]")
    refine_time = rc.scene.dim == 3 and rc.measure == "domain_boundary"
    out = []
    for k in range(levels):
        s = factor ** k
        n = max(1, round(rc.slabs * s)) if refine_time else rc.slabs
        out.append((rc.h_box / s, rc.h_shape / s, n))
    return out


@dataclass
class LadderResult:
    ladder: ConvergenceLadder
    runs: list
    rate: object
    band: tuple

    @property
    def passed(self) -> bool:
        if self.rate.exact:
            return True
        return self.band[0] <= self.rate.rate <= self.band[1]


def convergence(rc: RunConfig, levels: int | None = None, factor: float | None = None,
                on_level=None) -> LadderResult:
    levels = rc.levels if levels is None else levels
    factor = rc.factor if factor is None else factor
    exact = exact_for(rc)
    if exact is None:
        raise InvalidInputError("no closed-form measure for this scene; convergence needs one")
    plan = ladder_levels(rc, levels, factor)
    ladder = ConvergenceLadder(dim_cell=rc.scene.dim)
    runs = []
    for hb, hs, n in plan:
        res = run(rc, hb, hs, n)
        res.slabs = None  # keep memory flat across levels
        ladder.add(res.measured.n_cells, res.measured.n_vertices, res.approx, exact)
        runs.append(res)
        if on_level is not None:
            on_level(ladder, res)
    return LadderResult(ladder, runs, fit_rate(ladder), tuple(rc.rate_band))


def with_overrides(rc: RunConfig, **kw) -> RunConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    if "substeps" in kw:
        kw["trajectory"] = replace(rc.trajectory, substeps=int(kw.pop("substeps")))
    return replace(rc, **kw)
