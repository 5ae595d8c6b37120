"""Scene configurations of the six benchmark problems.

Each builder returns a plain config dictionary accepted by
:func:`stslab.io_formats.config_from_dict`; ``configs/*.json`` in the
repository are these dictionaries written out.
"""

from __future__ import annotations

import copy
import math

_HALF_PI = math.pi / 2.0

BENCHMARKS = {
    "stationary_circle": {
        "name": "stationary circle", "case": "stationary_circle",
        "box": {"lower": [0.0, 0.0], "upper": [10.0, 10.0]},
        "shapes": [{"kind": "circle", "center": [5.0, 5.0], "radius": 1.0}],
        "time": {"t0": 0.0, "tf": 1.0, "h_time": 0.5},
        "sizing": {"h_box": 1.0, "h_shape": 0.35},
        "ladder": {"levels": 5, "factor": 2.0, "rate_band": [1.7, 2.3]},
    },
    "expanding_circle": {
        "name": "expanding circle", "case": "expanding_circle",
        "box": {"lower": [0.0, 0.0], "upper": [10.0, 10.0]},
        "shapes": [{"kind": "circle", "center": [5.0, 5.0], "radius": 1.0, "expansion_rate": 0.25}],
        "time": {"t0": 0.0, "tf": 1.0, "h_time": 0.5},
        "sizing": {"h_box": 1.0, "h_shape": 0.35},
        "ladder": {"levels": 5, "factor": 2.0, "rate_band": [1.7, 2.3]},
    },
    "stationary_sphere": {
        "name": "stationary sphere", "case": "stationary_sphere",
        "box": {"lower": [0.0, 0.0, 0.0], "upper": [10.0, 10.0, 10.0]},
        "shapes": [{"kind": "sphere", "center": [5.0, 5.0, 5.0], "radius": 1.0}],
        "time": {"t0": 0.0, "tf": 1.0, "slabs": 1},
        "sizing": {"h_box": 1.0, "h_shape": 0.5},
        "ladder": {"levels": 4, "factor": 1.5, "rate_band": [1.6, 2.4]},
    },
    "expanding_sphere": {
        "name": "expanding sphere", "case": "expanding_sphere",
        "box": {"lower": [0.0, 0.0, 0.0], "upper": [10.0, 10.0, 10.0]},
        "shapes": [{"kind": "sphere", "center": [5.0, 5.0, 5.0], "radius": 1.0,
                    "expansion_rate": 0.25}],
        "time": {"t0": 0.0, "tf": 1.0, "slabs": 1},
        "sizing": {"h_box": 1.0, "h_shape": 0.5},
        "ladder": {"levels": 4, "factor": 1.5, "rate_band": [1.6, 2.4]},
    },
    "rotating_ellipsoid": {
        "name": "rotating ellipsoid", "case": "rotating_ellipsoid",
        "box": {"lower": [-8.0, -8.0, -8.0], "upper": [8.0, 8.0, 8.0]},
        "shapes": [{"kind": "ellipsoid", "center": [0.0, 0.0, 0.0], "semi_axes": [1.0, 3.0, 2.0],
                    "angular_velocity": [0.0, 0.0, _HALF_PI]}],
        "time": {"t0": 0.0, "tf": 1.0, "slabs": 8},
        "sizing": {"h_box": 1.6, "h_shape": 0.8},
        "mesher": {"terminating": "tetgen"},
        "ladder": {"levels": 4, "factor": 1.26, "rate_band": [1.6, 2.4], "measure": "final_plane"},
    },
    "tandem_ellipsoids": {
        "name": "tandem ellipsoids", "case": "tandem_ellipsoids",
        "box": {"lower": [-7.5, -10.0, -10.0], "upper": [12.5, 10.0, 10.0]},
        "shapes": [{"kind": "ellipsoid", "center": [0.0, 0.0, 0.0], "semi_axes": [1.0, 3.0, 2.0],
                    "angular_velocity": [0.0, 0.0, _HALF_PI]},
                   {"kind": "ellipsoid", "center": [5.0, 0.0, 0.0], "semi_axes": [3.0, 1.0, 2.0],
                    "angular_velocity": [0.0, 0.0, -_HALF_PI]}],
        "time": {"t0": 0.0, "tf": 1.0, "slabs": 8},
        "sizing": {"h_box": 1.6, "h_shape": 0.8},
        "mesher": {"terminating": "tetgen"},
        "ladder": {"levels": 4, "factor": 1.26, "rate_band": [1.6, 2.4], "measure": "final_plane"},
    },
}


def benchmark(name: str, **sections) -> dict:
    """Config of a benchmark; keyword arguments update top-level sections,
    e.g. ``benchmark("stationary_sphere", sizing={"h_box": 2.0})``."""
    if name not in BENCHMARKS:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}")
    doc = copy.deepcopy(BENCHMARKS[name])
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key].update(value)
        else:
            doc[key] = value
    return doc
