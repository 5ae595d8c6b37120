"""Space-time slab hull meshing for domains with moving boundaries.

2D+t scenes produce closed triangle hulls embedded in R^3 and 3D+t scenes
produce closed tetrahedral hulls embedded in R^4, one per time slab.
"""

from .errors import StSlabError
from .geom_core import Patch, SimplicialMesh, VertexTag, hull_closure_check, total_measure
from .kinematics import BoxDomain, MovingScene, MovingShape, ShapeKind
from .slab import Slab, SlabConfig, assemble_domain_boundary
from .trajectory import TrajectoryConfig

__version__ = "0.1.0"

__all__ = ["StSlabError", "Patch", "SimplicialMesh", "VertexTag", "hull_closure_check",
           "total_measure", "BoxDomain", "MovingScene", "MovingShape", "ShapeKind", "Slab",
           "SlabConfig", "assemble_domain_boundary", "TrajectoryConfig", "__version__"]
