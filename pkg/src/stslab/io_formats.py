"""Mesh files, VTK export and scene configuration.

``.stmesh`` grammar (ASCII, one record per line)::

    stmesh 1
    dims <embed> <cell>
    vertices <n>
    <i> <x_0> ... <x_embed-1> <tag>        # tag: interior | box | object
    cells <m>
    <j> <v_0> ... <v_cell> <patch>          # patch: initial | intermediate | terminating

Coordinates are printed with 17 significant digits so a round trip is
bit-exact. Shape ownership of object vertices is not stored; use
:func:`infer_owners` to recover it from a scene.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError, InvalidInputError, ParseError
from .geom_core import Patch, SimplicialMesh, VertexTag
from .kinematics import BoxDomain, MovingScene, MovingShape, ShapeKind
from .trajectory import TrajectoryConfig

FORMAT_VERSION = 1
TAG_NAMES = {VertexTag.INTERIOR: "interior", VertexTag.BOX_BOUNDARY: "box",
             VertexTag.OBJECT_BOUNDARY: "object"}
PATCH_NAMES = {Patch.INITIAL: "initial", Patch.INTERMEDIATE: "intermediate",
               Patch.TERMINATING: "terminating"}
_TAG_OF = {v: int(k) for k, v in TAG_NAMES.items()}
_PATCH_OF = {v: int(k) for k, v in PATCH_NAMES.items()}


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def format_stmesh(mesh: SimplicialMesh) -> str:
    tag_names = [TAG_NAMES[VertexTag(t)] for t in range(3)]
    patch_names = [PATCH_NAMES[Patch(p)] for p in range(3)]
    lines = [f"stmesh {FORMAT_VERSION}", f"dims {mesh.dim_embed} {mesh.dim_cell}",
             f"vertices {mesh.n_vertices}"]
    for i, (x, t) in enumerate(zip(mesh.vertices.tolist(), mesh.vertex_tag.tolist())):
        lines.append(f"{i} {' '.join(map(_fmt, x))} {tag_names[t]}")
    lines.append(f"cells {mesh.n_cells}")
    for j, (c, p) in enumerate(zip(mesh.cells.tolist(), mesh.patch.tolist())):
        lines.append(f"{j} {' '.join(map(str, c))} {patch_names[p]}")
    return "\n".join(lines) + "\n"


def write_stmesh(mesh: SimplicialMesh, path) -> None:
    Path(path).write_text(format_stmesh(mesh))


def parse_stmesh(text: str) -> SimplicialMesh:
    lines = text.splitlines()
    pos = 0

    def next_line(what):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(f"unexpected end of file, expected {what}", line=pos + 1)
        pos += 1
        return lines[pos - 1].split()

    def header(what, n_fields):
        tok = next_line(f"'{what}' header")
        if len(tok) != n_fields + 1 or tok[0] != what:
            raise ParseError(f"expected '{what}' header", line=pos)
        try:
            return [int(v) for v in tok[1:]]
        except ValueError:
            raise ParseError(f"non-integer value in '{what}' header", line=pos) from None

    (version,) = header("stmesh", 1)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported stmesh version {version}", line=pos)
    embed, cell = header("dims", 2)
    if cell not in (2, 3) or embed < cell:
        raise ParseError(f"unsupported dims {embed} {cell}", line=pos)
    (n,) = header("vertices", 1)
    X = np.empty((n, embed))
    tag = np.empty(n, np.int8)
    for i in range(n):
        tok = next_line("a vertex record")
        if len(tok) != embed + 2:
            raise ParseError(f"vertex record needs {embed + 2} fields, found {len(tok)}", line=pos)
        if tok[0] != str(i):
            raise ParseError(f"vertex index {tok[0]} out of sequence (expected {i})", line=pos)
        try:
            X[i] = [float(v) for v in tok[1:-1]]
        except ValueError:
            raise ParseError("malformed vertex coordinate", line=pos) from None
        if tok[-1] not in _TAG_OF:
            raise ParseError(f"unknown vertex tag {tok[-1]!r}", line=pos)
        tag[i] = _TAG_OF[tok[-1]]
    (m,) = header("cells", 1)
    C = np.empty((m, cell + 1), np.int64)
    patch = np.empty(m, np.int8)
    for j in range(m):
        tok = next_line("a cell record")
        if len(tok) != cell + 3:
            raise ParseError(f"cell record needs {cell + 3} fields, found {len(tok)}", line=pos)
        if tok[0] != str(j):
            raise ParseError(f"cell index {tok[0]} out of sequence (expected {j})", line=pos)
        try:
            C[j] = [int(v) for v in tok[1:-1]]
        except ValueError:
            raise ParseError("malformed cell vertex index", line=pos) from None
        if C[j].min() < 0 or C[j].max() >= n:
            raise ParseError(f"cell vertex index out of range [0, {n})", line=pos)
        if tok[-1] not in _PATCH_OF:
            raise ParseError(f"unknown patch label {tok[-1]!r}", line=pos)
        patch[j] = _PATCH_OF[tok[-1]]
    for k in range(pos, len(lines)):
        if lines[k].strip():
            raise ParseError("trailing content after the cell block", line=k + 1)
    mesh = SimplicialMesh(X, C, tag, patch)
    mesh.validate(check_measure=False)
    return mesh


def read_stmesh(path) -> SimplicialMesh:
    return parse_stmesh(Path(path).read_text())


def infer_owners(mesh: SimplicialMesh, scene: MovingScene, t: float | None = None) -> SimplicialMesh:
    """Assign each object vertex to the shape whose surface it is closest
    to (smallest ``|implicit|``) at time ``t`` (the last coordinate of the
    vertex if ``t`` is None and the mesh is a space-time mesh)."""
    owner = np.full(mesh.n_vertices, -1, np.int32)
    obj = np.nonzero(mesh.vertex_tag == int(VertexTag.OBJECT_BOUNDARY))[0]
    if len(obj) and scene.shapes:
        d = scene.dim
        X = mesh.vertices[obj, :d]
        if t is None and mesh.dim_embed == d + 1:
            times = mesh.vertices[obj, d]
        else:
            times = np.full(len(obj), scene.t0 if t is None else float(t))
        best = np.full(len(obj), np.inf)
        for tt in np.unique(times):
            sel = np.nonzero(times == tt)[0]
            for k, s in enumerate(scene.shapes):
                r = np.abs(s.implicit(X[sel], tt))
                upd = r < best[sel]
                best[sel[upd]] = r[upd]
                owner[obj[sel[upd]]] = k
    return mesh.replace(owner=owner)


# ---------------------------------------------------------------------------
# VTK


VTK_CELL_TYPE = {2: 5, 3: 10}


def cross_section(mesh: SimplicialMesh, t_query: float, tol: float = 1e-9) -> SimplicialMesh:
    """Cells of a space-time mesh lying in the plane ``t = t_query``, with
    the time coordinate dropped."""
    X, C = mesh.vertices, mesh.cells
    keep = np.all(np.abs(X[C, -1] - t_query) < tol, axis=1)
    C = C[keep]
    used = np.zeros(len(X), bool)
    used[C.ravel()] = True
    remap = np.cumsum(used) - 1
    return SimplicialMesh(X[used, :-1], remap[C], mesh.vertex_tag[used], mesh.patch[keep],
                          mesh.owner[used])


def format_vtk(mesh: SimplicialMesh, time_mode: str = "drop", t_query: float | None = None,
               tol: float = 1e-9, title: str = "stslab mesh") -> str:
    """Legacy ASCII unstructured grid.

    Meshes embedded in at most three dimensions are written as they are.
    For 4D meshes ``time_mode="drop"`` writes the spatial coordinates and
    attaches the time coordinate as the point scalar ``time``.
    ``time_mode="section"`` keeps only the cells with every vertex in
    ``|t - t_query| < tol`` (a constant-time cross-section) and drops the
    time coordinate.
    """
    if time_mode not in ("drop", "section"):
        raise InvalidInputError(f"unknown time_mode {time_mode!r}")
    X, C, patch, tags = mesh.vertices, mesh.cells, mesh.patch, mesh.vertex_tag
    times = None
    if time_mode == "section":
        if t_query is None:
            raise InvalidInputError("section export needs t_query")
        sec = cross_section(mesh, t_query, tol)
        X, C, patch, tags = sec.vertices, sec.cells, sec.patch, sec.vertex_tag
    elif mesh.dim_embed == 4:
        X, times = X[:, :3], X[:, 3]
    P = np.zeros((len(X), 3))
    P[:, :X.shape[1]] = X
    k = C.shape[1]
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(P)} double"]
    out += [" ".join(map(_fmt, p)) for p in P.tolist()]
    out.append(f"CELLS {len(C)} {len(C) * (k + 1)}")
    out += [f"{k} " + " ".join(map(str, c)) for c in C.tolist()]
    out.append(f"CELL_TYPES {len(C)}")
    out += [str(VTK_CELL_TYPE[k - 1])] * len(C)
    out.append(f"POINT_DATA {len(P)}")
    if times is not None:
        out += ["SCALARS time double 1", "LOOKUP_TABLE default"]
        out += [_fmt(v) for v in times.tolist()]
    out += ["SCALARS vertex_tag int 1", "LOOKUP_TABLE default"]
    out += [str(v) for v in tags.tolist()]
    out.append(f"CELL_DATA {len(C)}")
    out += ["SCALARS patch int 1", "LOOKUP_TABLE default"]
    out += [str(v) for v in patch.tolist()]
    return "\n".join(out) + "\n"


def export_vtk(mesh: SimplicialMesh, path, time_mode: str = "drop",
               t_query: float | None = None, tol: float = 1e-9) -> None:
    Path(path).write_text(format_vtk(mesh, time_mode, t_query, tol))


# ---------------------------------------------------------------------------
# scene configuration

_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["box", "shapes", "time", "sizing"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "case": {"enum": ["stationary_circle", "expanding_circle", "stationary_sphere",
                          "expanding_sphere", "rotating_ellipsoid", "tandem_ellipsoids"]},
        "box": {
            "type": "object", "required": ["lower", "upper"], "additionalProperties": False,
            "properties": {"lower": _VEC, "upper": _VEC}},
        "shapes": {
            "type": "array",
            "items": {
                "type": "object", "required": ["kind", "center"], "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["circle", "sphere", "ellipsoid"]},
                    "center": _VEC,
                    "radius": _POS,
                    "expansion_rate": {"type": "number"},
                    "semi_axes": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3},
                    "angular_velocity": {"type": "array", "items": {"type": "number"},
                                         "minItems": 3, "maxItems": 3}},
                "allOf": [
                    {"if": {"properties": {"kind": {"const": "ellipsoid"}}},
                     "then": {"required": ["semi_axes"],
                              "not": {"anyOf": [{"required": ["radius"]},
                                                {"required": ["expansion_rate"]}]}},
                     "else": {"required": ["radius"],
                              "not": {"anyOf": [{"required": ["semi_axes"]},
                                                {"required": ["angular_velocity"]}]}}}]}},
        "time": {
            "type": "object", "required": ["t0", "tf"], "additionalProperties": False,
            "properties": {"t0": {"type": "number"}, "tf": {"type": "number"},
                           "h_time": _POS, "slabs": {"type": "integer", "minimum": 1}}},
        "sizing": {
            "type": "object", "required": ["h_box", "h_shape"], "additionalProperties": False,
            "properties": {"h_box": _POS, "h_shape": _POS}},
        "trajectory": {
            "type": "object", "additionalProperties": False,
            "properties": {"substeps": {"type": "integer", "minimum": 1},
                           "project_each_substep": {"type": "boolean"},
                           "terminal_projection": {"type": "boolean"},
                           "integrator": {"enum": ["forward_euler"]}}},
        "mesher": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "strategy": {"enum": ["C", "E"]},
                "terminating": {"enum": ["topology_transfer", "laplacian", "tetgen", "external"]},
                "external_command": {"type": "string"},
                "merge_tol": _POS,
                "initial_mesh": {"type": "string"},
                "min_angle": {"type": "number", "minimum": 0, "maximum": 34},
                "engine": {"enum": ["auto", "bowyer_watson", "qhull"]},
                "seed": {"type": "integer", "minimum": 0}}},
        "ladder": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "levels": {"type": "integer", "minimum": 3},
                "factor": {"type": "number", "minimum": 1.25, "maximum": 2.0},
                "rate_band": {"type": "array", "items": {"type": "number"},
                              "minItems": 2, "maxItems": 2},
                "measure": {"enum": ["domain_boundary", "final_plane"]}}},
    },
}


@dataclass
class RunConfig:
    """Scene plus everything needed to run the pipeline on it."""

    scene: MovingScene
    h_box: float
    h_shape: float
    slabs: int
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    strategy: str = "E"
    terminating: str = "topology_transfer"
    external_command: str | None = None
    merge_tol: float | None = None
    min_angle: float = 20.0
    engine: str = "auto"
    seed: int = 0
    levels: int = 4
    factor: float = 2.0
    rate_band: tuple = (1.6, 2.4)
    measure: str = "domain_boundary"
    initial_mesh: str | None = None
    case: str | None = None
    name: str = "scene"
    raw: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.scene.t0, self.scene.tf, self.slabs + 1)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_config(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCENE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        ptr = _pointer(e.absolute_path)
        raise ConfigError(e.message, pointer=ptr)


def config_from_dict(doc: dict) -> RunConfig:
    validate_config(doc)
    box = BoxDomain(doc["box"]["lower"], doc["box"]["upper"])
    shapes = []
    for i, s in enumerate(doc["shapes"]):
        try:
            if s["kind"] == "ellipsoid":
                shapes.append(MovingShape(ShapeKind.ELLIPSOID, s["center"], semi_axes=s["semi_axes"],
                                          angular_velocity=s.get("angular_velocity", [0.0, 0.0, 0.0])))
            else:
                shapes.append(MovingShape(ShapeKind(s["kind"]), s["center"], radius=s["radius"],
                                          expansion_rate=s.get("expansion_rate", 0.0)))
        except InvalidInputError as exc:
            raise ConfigError(str(exc), pointer=f"/shapes/{i}") from exc
    tm = doc["time"]
    t0, tf = float(tm["t0"]), float(tm["tf"])
    if not tf > t0:
        raise ConfigError("must exceed t0", pointer="/time/tf")
    if "slabs" in tm and "h_time" in tm:
        raise ConfigError("give either slabs or h_time, not both", pointer="/time")
    if "slabs" in tm:
        n_slabs = int(tm["slabs"])
    elif "h_time" in tm:
        n_slabs = max(1, math.ceil((tf - t0) / float(tm["h_time"]) - 1e-9))
    else:
        n_slabs = 1
    scene = MovingScene(box, shapes, t0, tf)
    try:
        scene.validate()
    except InvalidInputError as exc:
        raise ConfigError(str(exc), pointer="/shapes") from exc
    tr = doc.get("trajectory", {})
    traj = TrajectoryConfig(substeps=tr.get("substeps", 32),
                            project_each_substep=tr.get("project_each_substep", False),
                            terminal_projection=tr.get("terminal_projection", True),
                            integrator=tr.get("integrator", "forward_euler"))
    me = doc.get("mesher", {})
    if me.get("terminating") == "external" and "external_command" not in me:
        raise ConfigError("required for the external mesher",
                          pointer="/mesher/external_command")
    ld = doc.get("ladder", {})
    measure = ld.get("measure", "final_plane" if any(s.is_ellipsoid for s in shapes)
                     else "domain_boundary")
    return RunConfig(scene=scene, h_box=float(doc["sizing"]["h_box"]),
                     h_shape=float(doc["sizing"]["h_shape"]), slabs=n_slabs, trajectory=traj,
                     strategy=me.get("strategy", "E"),
                     terminating=me.get("terminating", "topology_transfer"),
                     external_command=me.get("external_command"), merge_tol=me.get("merge_tol"),
                     min_angle=float(me.get("min_angle", 20.0)), engine=me.get("engine", "auto"),
                     seed=int(me.get("seed", 0)), levels=int(ld.get("levels", 4)),
                     factor=float(ld.get("factor", 2.0)),
                     rate_band=tuple(ld.get("rate_band", (1.6, 2.4))), measure=measure,
                     initial_mesh=me.get("initial_mesh"),
                     case=doc.get("case"), name=doc.get("name", "scene"), raw=doc)


def read_scene_config(path) -> RunConfig:
    """Load and validate a JSON scene config; a relative ``initial_mesh``
    path is resolved against the config's directory."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", pointer="/") from exc
    rc = config_from_dict(doc)
    if rc.initial_mesh is not None:
        rc.initial_mesh = str(Path(path).parent / rc.initial_mesh)
    return rc


def load_initial_mesh(path, scene: MovingScene, t: float) -> SimplicialMesh:
    """Read a plane mesh for the first slab, lifting it to ``t`` if it is
    stored without the time coordinate and recovering shape ownership."""
    mesh = read_stmesh(path)
    d = scene.dim
    if mesh.dim_cell != d:
        raise InvalidInputError(f"initial mesh must have {d}-simplices, found dim {mesh.dim_cell}")
    if mesh.dim_embed == d:
        mesh = mesh.replace(vertices=np.column_stack([mesh.vertices, np.full(mesh.n_vertices, t)]))
    elif mesh.dim_embed != d + 1 or np.any(np.abs(mesh.vertices[:, d] - t) > 1e-12 * max(1.0, abs(t))):
        raise InvalidInputError(f"initial mesh must lie in the plane t = {t}")
    mesh = mesh.with_patch(Patch.TERMINATING)
    return infer_owners(mesh, scene, t)


def write_csv(rows, path, columns) -> None:
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) if isinstance(r[c], float) else str(r[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")
