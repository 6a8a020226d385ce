"""Resonator geometry: a straight conducting wall plus a circular-arc reflector.

Coordinate frame: the wall is the line x = 0 (Dirichlet), the symmetry axis is
y = 0.  The arc has radius ``R``, opening angle ``alpha`` and its vertex sits a
distance ``D`` from the wall, so the arc center is at (D - R, 0) and the point
at arc parameter theta is (D - R + R cos(theta), R sin(theta)) for
theta in [-alpha/2, +alpha/2].  A point antenna sits at (d_a, 0) just off the
wall.  Everything downstream (ray tracing, the semiclassical engine and the
boundary-integral solver) works in this frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

__all__ = [
    "ConfigurationError",
    "Point",
    "StabilityClass",
    "ResonatorGeometry",
    "ArcHit",
    "build_geometry",
    "tip_positions",
    "stability_class",
    "ray_arc_intersect",
    "reflect",
]


class ConfigurationError(ValueError):
    """A resonator or run parameter is outside its valid range."""


class Point(NamedTuple):
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


class StabilityClass(Enum):
    STABLE = "stable"
    MARGINAL = "marginal"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class ResonatorGeometry:
    """Wall-plus-arc resonator configuration (lengths in cm, angle in degrees)."""

    radius: float
    alpha_deg: float
    separation: float
    antenna_offset: float = 0.2

    @property
    def half_angle(self) -> float:
        """Half opening angle in radians."""
        return math.radians(self.alpha_deg) / 2.0

    @property
    def arc_center(self) -> Point:
        return Point(self.separation - self.radius, 0.0)

    @property
    def vertex(self) -> Point:
        return Point(self.separation, 0.0)

    @property
    def antenna(self) -> Point:
        return Point(self.antenna_offset, 0.0)

    @property
    def arc_length(self) -> float:
        return self.radius * 2.0 * self.half_angle

    def arc_point(self, theta) -> np.ndarray:
        """Point(s) on the arc at parameter theta (radians); theta may be an array."""
        theta = np.asarray(theta, dtype=float)
        cx, cy = self.arc_center
        return np.stack(
            [cx + self.radius * np.cos(theta), cy + self.radius * np.sin(theta)],
            axis=-1,
        )

    def arc_normal(self, theta) -> np.ndarray:
        """Unit normal at theta pointing from the arc toward its center."""
        theta = np.asarray(theta, dtype=float)
        return np.stack([-np.cos(theta), -np.sin(theta)], axis=-1)


class ArcHit(NamedTuple):
    point: Point
    theta: float
    path_length: float


def build_geometry(
    radius: float,
    alpha_deg: float,
    separation: float,
    antenna_offset: float = 0.2,
) -> ResonatorGeometry:
    """Validate parameters and construct a :class:`ResonatorGeometry`.

    Raises :class:`ConfigurationError` naming the offending field.
    """
    if not (np.isfinite(radius) and radius > 0):
        raise ConfigurationError(f"radius_cm must be positive and finite, got {radius}")
    if not (np.isfinite(alpha_deg) and 0 < alpha_deg < 180):
        raise ConfigurationError(
            f"alpha_deg must lie strictly between 0 and 180 degrees, got {alpha_deg}"
        )
    if not (np.isfinite(separation) and separation > 0):
        raise ConfigurationError(
            f"separation_cm must be positive and finite, got {separation}"
        )
    if not (np.isfinite(antenna_offset) and 0 < antenna_offset < separation):
        raise ConfigurationError(
            "antenna_offset_cm must be positive and smaller than separation_cm, "
            f"got {antenna_offset}"
        )
    geom = ResonatorGeometry(
        radius=float(radius),
        alpha_deg=float(alpha_deg),
        separation=float(separation),
        antenna_offset=float(antenna_offset),
    )
    x_tip = separation - radius + radius * math.cos(geom.half_angle)
    if x_tip <= 0:
        raise ConfigurationError(
            "separation_cm/alpha_deg place the reflector tips behind the wall "
            f"(tip x = {x_tip:.3f} cm <= 0)"
        )
    return geom


def tip_positions(geom: ResonatorGeometry) -> tuple[Point, Point]:
    """Arc endpoints at theta = +alpha/2 (upper) and -alpha/2 (lower)."""
    upper = geom.arc_point(geom.half_angle)
    return Point(float(upper[0]), float(upper[1])), Point(float(upper[0]), -float(upper[1]))


def stability_class(geom: ResonatorGeometry, tol: float = 1e-9) -> StabilityClass:
    """Classify the classical dynamics by where the arc's center of curvature sits.

    Stable for D < R (center behind the wall), unstable for D > R; a relative
    band of width ``tol`` around D = R reports the marginal transition.
    """
    if geom.separation < geom.radius * (1.0 - tol):
        return StabilityClass.STABLE
    if geom.separation > geom.radius * (1.0 + tol):
        return StabilityClass.UNSTABLE
    return StabilityClass.MARGINAL


def ray_arc_intersect(
    origin,
    direction,
    geom: ResonatorGeometry,
    min_t: float | None = None,
) -> ArcHit | None:
    """Nearest forward intersection of a ray with the arc, or None.

    ``origin``/``direction`` are length-2 sequences; ``direction`` must be a
    unit vector.  Intersections are accepted only for arc parameter within
    [-alpha/2, +alpha/2] and ray parameter t > min_t (default 1e-9 R, which
    skips the ray's own foot point after a bounce).  A grazing (tangent) ray is
    resolved by a small discriminant tolerance: a slightly negative
    discriminant counts as a miss, a near-zero one as a touch.
    """
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    if min_t is None:
        min_t = 1e-9 * geom.radius
    c = np.array(geom.arc_center, dtype=float)
    oc = o - c
    b = float(d @ oc)
    c0 = float(oc @ oc) - geom.radius**2
    disc = b * b - c0
    disc_tol = 1e-14 * geom.radius**2
    if disc < -disc_tol:
        return None
    disc = max(disc, 0.0)
    sq = math.sqrt(disc)
    half = geom.half_angle
    for t in sorted((-b - sq, -b + sq)):
        if t <= min_t:
            continue
        hit = o + t * d
        theta = math.atan2(hit[1] - c[1], hit[0] - c[0])
        if abs(theta) <= half + 1e-12:
            return ArcHit(Point(float(hit[0]), float(hit[1])), theta, float(t))
    return None


def reflect(direction, normal) -> np.ndarray:
    """Specular reflection d' = d - 2 (d.n) n of a unit vector at a unit normal."""
    d = np.asarray(direction, dtype=float)
    n = np.asarray(normal, dtype=float)
    return d - 2.0 * (d @ n) * n
