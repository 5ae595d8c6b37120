"""Exact measures of the benchmark scenes and convergence-rate fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidInputError


class Case(str, Enum):
    STATIONARY_CIRCLE = "stationary_circle"
    EXPANDING_CIRCLE = "expanding_circle"
    STATIONARY_SPHERE = "stationary_sphere"
    EXPANDING_SPHERE = "expanding_sphere"
    ROTATING_ELLIPSOID = "rotating_ellipsoid"
    TANDEM_ELLIPSOIDS = "tandem_ellipsoids"


def _cube_diff_quotient(rf: float, r0: float) -> float:
    """(rf^3 - r0^3) / (rf - r0) without the removable singularity."""
    return rf * rf + rf * r0 + r0 * r0


def exact_measure(case, L: float, R: float = None, R0: float = None, m: float = 0.0,
                  t0: float = 0.0, tf: float = 1.0, semi_axes=None) -> float:
    """Closed-form area (2D+t) or hypervolume (3D+t) of the domain boundary.

    ``semi_axes`` is one ``(a, b, c)`` triple for a rotating ellipsoid and
    a list of triples for the tandem case; those two cases return the
    volume of the spatial domain at the final time instead.
    """
    case = Case(case)
    if not L > 0:
        raise InvalidInputError("box edge L must be positive")
    dt = float(tf) - float(t0)
    pi = math.pi
    if case in (Case.STATIONARY_CIRCLE, Case.STATIONARY_SPHERE):
        if R is None:
            raise InvalidInputError(f"{case.value} needs R")
        if case is Case.STATIONARY_CIRCLE:
            return 2.0 * (L ** 2 - pi * R ** 2) + (4.0 * L + 2.0 * pi * R) * dt
        return 2.0 * (L ** 3 - 4.0 / 3.0 * pi * R ** 3) + (6.0 * L ** 2 + 4.0 * pi * R ** 2) * dt
    if case in (Case.EXPANDING_CIRCLE, Case.EXPANDING_SPHERE):
        r0 = R0 if R0 is not None else R
        if r0 is None:
            raise InvalidInputError(f"{case.value} needs R0")
        rf = r0 + m * dt
        slant = math.hypot(rf - r0, dt)
        if case is Case.EXPANDING_CIRCLE:
            return (2.0 * L ** 2 - pi * (rf ** 2 + r0 ** 2) + 4.0 * L * dt
                    + pi * (rf + r0) * slant)
        return (2.0 * L ** 3 - 4.0 / 3.0 * pi * (rf ** 3 + r0 ** 3) + 6.0 * L ** 2 * dt
                + 4.0 / 3.0 * pi * _cube_diff_quotient(rf, r0) * slant)
    if semi_axes is None:
        raise InvalidInputError(f"{case.value} needs semi_axes")
    axes = np.asarray(semi_axes, float).reshape(-1, 3)
    if case is Case.ROTATING_ELLIPSOID and len(axes) != 1:
        raise InvalidInputError("rotating_ellipsoid takes one (a, b, c) triple")
    return L ** 3 - 4.0 / 3.0 * pi * float(np.sum(np.prod(axes, axis=1)))


def measure_error(exact: float, approx: float) -> float:
    if not (math.isfinite(exact) and math.isfinite(approx)):
        raise InvalidInputError("measures must be finite")
    return abs(exact - approx)


def spacing_exponent(dim_cell: int) -> float:
    """Exponent of the element count that gives a length proxy."""
    return -1.0 / dim_cell


@dataclass
class LadderEntry:
    elements: int
    vertices: int
    approx: float
    exact: float
    spacing_proxy: float

    @property
    def error(self) -> float:
        return measure_error(self.exact, self.approx)


@dataclass
class ConvergenceLadder:
    """Measured values for a sequence of refined meshes.

    ``dim_cell`` is 2 for surface meshes and 3 for hypersurface meshes;
    the spacing proxy of an entry is ``elements ** (-1 / dim_cell)``.
    """

    dim_cell: int
    entries: list = field(default_factory=list)
    fitted_rate: float | None = None
    fit_residual: float | None = None

    def add(self, elements: int, vertices: int, approx: float, exact: float) -> LadderEntry:
        e = LadderEntry(int(elements), int(vertices), float(approx), float(exact),
                        float(elements) ** spacing_exponent(self.dim_cell))
        self.entries.append(e)
        self.entries.sort(key=lambda x: -x.spacing_proxy)
        return e

    def rows(self):
        for i, e in enumerate(self.entries):
            yield {"mesh_index": i + 1, "elements": e.elements, "vertices": e.vertices,
                   "spacing_proxy": e.spacing_proxy, "approx": e.approx, "exact": e.exact,
                   "error": e.error}


@dataclass(frozen=True)
class RateFit:
    rate: float | None
    residual: float | None
    exact: bool = False

    def __str__(self):
        if self.exact:
            return "exact to working precision"
        return f"{self.rate:.4f}"


def fit_rate(ladder: ConvergenceLadder) -> RateFit:
    """Least-squares slope of log(error) against log(spacing proxy).

    A zero error anywhere makes the rate undefined; the fit then reports
    the ladder as exact to working precision.
    """
    if len(ladder.entries) < 3:
        raise InvalidInputError("rate fitting needs at least three ladder entries")
    h = np.array([e.spacing_proxy for e in ladder.entries])
    err = np.array([e.error for e in ladder.entries])
    if np.any(err == 0.0):
        fit = RateFit(None, None, exact=True)
    else:
        A = np.column_stack([np.log(h), np.ones_like(h)])
        coef, res, *_ = np.linalg.lstsq(A, np.log(err), rcond=None)
        resid = float(np.sqrt(res[0] / len(h))) if len(res) else 0.0
        fit = RateFit(float(coef[0]), resid)
    ladder.fitted_rate = fit.rate
    ladder.fit_residual = fit.residual
    return fit
