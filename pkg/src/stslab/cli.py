"""Command-line front end.

Exit codes: 0 success, 1 invalid input or usage, 2 pipeline or geometry
failure, 3 convergence rate outside the configured band.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_INPUT, EXIT_PIPELINE, EXIT_BAND = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stslab", description="Space-time slab hull meshing for moving-boundary scenes.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="scene configuration (JSON)")
        sp.add_argument("--out", default="stslab_out", help="output directory")
        sp.add_argument("--strategy", choices=["C", "E"], help="prism split strategy")
        sp.add_argument("--substeps", type=int, help="trajectory sub-steps per slab (M)")
        sp.add_argument("--seed", type=int, help="seed of the point insertion order")
        sp.add_argument("--external-mesher", metavar="CMD",
                        help="terminating-hyperplane mesher command with {in} and {out}")
        sp.add_argument("--threads", type=int, help="cap on worker threads")

    for name, text in (("generate", "build every slab and write hull meshes"),
                       ("measure", "print the measured quantity and its exact value"),
                       ("verify", "check closure and conformity of every slab")):
        common(sub.add_parser(name, help=text))
    sp = sub.add_parser("convergence", help="run a refinement ladder and fit the rate")
    common(sp)
    sp.add_argument("--levels", type=int, help="number of ladder levels (>= 3)")
    sp.add_argument("--factor", type=float, help="refinement factor per level, in [1.25, 2]")
    sp = sub.add_parser("split-demo", help="write the reference prism and its splits")
    sp.add_argument("--out", default="stslab_out", help="output directory")
    return p


def _load(args):
    from .io_formats import read_scene_config
    from .pipeline import with_overrides
    rc = read_scene_config(args.config)
    kw = dict(strategy=args.strategy, substeps=args.substeps, seed=args.seed)
    if args.external_mesher:
        kw.update(terminating="external", external_command=args.external_mesher)
    return with_overrides(rc, **kw)


def _table(rows, columns):
    widths = [max(len(c), *(len(str(r[c])) for r in rows)) if rows else len(c) for c in columns]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(str(r[c]).rjust(w) for c, w in zip(columns, widths)) for r in rows]
    return "\n".join(lines)


def _slab_rows(slabs):
    from .geom_core import total_measure
    rows = []
    for i, s in enumerate(slabs):
        rep = total_measure(s.hull)
        rows.append({"slab": i, "t_n": s.t_n, "t_np1": s.t_np1, "cells": s.hull.n_cells,
                     "vertices": s.hull.n_vertices, "hull_measure": float(f"{rep.total:.12g}"),
                     "closed": bool(s.closure.closed), **s.info})
    return rows


def cmd_generate(args, out: Path) -> int:
    from .io_formats import export_vtk, write_stmesh
    from .pipeline import run
    rc = _load(args)
    res = run(rc)
    rows = _slab_rows(res.slabs)
    for i, s in enumerate(res.slabs):
        write_stmesh(s.hull, out / f"slab_{i:03d}.stmesh")
        export_vtk(s.hull, out / f"slab_{i:03d}.vtk")
    summary = {"name": rc.name, "slabs": rows, "measure": res.approx, "exact": res.exact,
               "error": res.error}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(_table(rows, ["slab", "t_n", "t_np1", "cells", "vertices", "hull_measure", "closed"]))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if all(r["closed"] for r in rows) else EXIT_PIPELINE


def cmd_measure(args, out: Path) -> int:
    from .pipeline import run
    rc = _load(args)
    res = run(rc)
    info = {"name": rc.name, "measure": rc.measure, "elements": res.measured.n_cells,
            "vertices": res.measured.n_vertices, "approx": res.approx, "exact": res.exact,
            "error": res.error, "slabs": res.n_slabs}
    (out / "measure.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def cmd_verify(args, out: Path) -> int:
    from .geom_core import hull_closure_check
    from .pipeline import run
    rc = _load(args)
    res = run(rc)
    rows = _slab_rows(res.slabs)
    whole = hull_closure_check(res.measured) if rc.measure == "domain_boundary" else None
    ok = all(r["closed"] for r in rows) and (whole is None or whole.closed)
    report = {"name": rc.name, "slabs": rows, "ok": ok,
              "domain_boundary": None if whole is None else whole.summary()}
    (out / "verify.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(_table(rows, ["slab", "cells", "lateral_quads", "tets_per_prism", "closed"]))
    if whole is not None:
        print(f"domain boundary: {whole.summary()}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_PIPELINE


def cmd_convergence(args, out: Path) -> int:
    from .io_formats import write_csv, write_stmesh
    from .pipeline import convergence, ladder_levels
    rc = _load(args)
    levels = rc.levels if args.levels is None else args.levels
    factor = rc.factor if args.factor is None else args.factor
    ladder_levels(rc, levels, factor)  # validates before any work
    cols = ["mesh_index", "elements", "vertices", "spacing_proxy", "approx", "exact", "error"]
    csv = out / "convergence.csv"

    def on_level(ladder, res):
        write_csv(list(ladder.rows()), csv, cols)
        write_stmesh(res.measured, out / f"level_{len(ladder.entries) - 1:02d}.stmesh")
        print(f"level h_box={res.h_box:.6g} slabs={res.n_slabs} elements={res.measured.n_cells} "
              f"error={res.error:.6e} ({res.seconds:.1f}s)", flush=True)

    result = convergence(rc, levels, factor, on_level=on_level)
    print(_table([{k: (f"{v:.6e}" if isinstance(v, float) else v) for k, v in r.items()}
                  for r in result.ladder.rows()], cols))
    lo, hi = result.band
    print(f"fitted rate: {result.rate}  band [{lo}, {hi}]  {'PASS' if result.passed else 'FAIL'}")
    return EXIT_OK if result.passed else EXIT_BAND


def cmd_split_demo(args, out: Path) -> int:
    from .geom_core import total_measure
    from .io_formats import write_stmesh
    from .slab3d import REFERENCE_PRISM, reference_split
    from .geom_core import SimplicialMesh
    prism = SimplicialMesh(REFERENCE_PRISM, [[0, 1, 2, 3], [1, 2, 3, 4], [2, 3, 4, 5]])
    meshes = {"reference_prism": prism, "split_C": reference_split("C"),
              "split_E": reference_split("E"), "split_E_as_printed": reference_split("E", printed=True)}
    rows = []
    for name, m in meshes.items():
        write_stmesh(m, out / f"{name}.stmesh")
        rows.append({"mesh": name, "cells": m.n_cells, "vertices": m.n_vertices,
                     "volume": f"{total_measure(m).total:.12g}"})
    print(_table(rows, ["mesh", "cells", "vertices", "volume"]))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "measure": cmd_measure, "verify": cmd_verify,
            "convergence": cmd_convergence, "split-demo": cmd_split_demo}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = getattr(args, "threads", None)
    if threads is not None:
        if threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_INPUT
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    from .errors import ConfigError, InvalidInputError, ParseError, StSlabError
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except (ConfigError, InvalidInputError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StSlabError as exc:
        where = f" in slab {exc.slab}" if getattr(exc, "slab", None) is not None else ""
        print(f"error{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
