"""Stand-alone volume mesher speaking the external-mesher exchange format.

Usage: python tetgen_mesher.py <shell.stmesh> <volume.stmesh> [--fail]

Reads the triangle shell and its ``.holes`` sidecar, fills the shell with
TetGen (boundary preserved) and writes the tet mesh.
"""

import sys

import numpy as np
import tetgen

from stslab.geom_core import SimplicialMesh
from stslab.io_formats import read_stmesh, write_stmesh


def main(argv):
    if "--fail" in argv:
        print("mesher refused the input", file=sys.stderr)
        return 4
    src, dst = argv[:2]
    shell = read_stmesh(src)
    holes = np.loadtxt(src + ".holes", ndmin=2)
    tg = tetgen.TetGen(shell.vertices, shell.cells.astype(np.int32))
    for c in holes:
        tg.add_hole(c.tolist())
    nodes, elems, *_ = tg.tetrahedralize(switches="pq1.5YQ")
    write_stmesh(SimplicialMesh(nodes, elems), dst)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
