"""Planar geometry kernel.

Positions come in as WGS84 degrees and are worked on in a local
equirectangular frame (meters east/north of an origin picked by the
caller, usually the first network node or trajectory point). At city
scale the frame error is far below GPS noise and the projection is
exactly invertible. Headings are degrees counterclockwise from the +x
(east) axis; angle differences are minimal circular differences in
[0, 180].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6371008.8


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 position in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class PlanarPoint:
    """Meters east (x) and north (y) of the local frame origin."""

    x: float
    y: float


@dataclass(frozen=True)
class Segment:
    a: PlanarPoint
    b: PlanarPoint

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("degenerate segment: endpoints coincide")

    @property
    def length(self) -> float:
        return math.hypot(self.b.x - self.a.x, self.b.y - self.a.y)

    @property
    def heading(self) -> float:
        """Direction of travel a -> b, degrees from +x in [0, 360)."""
        return heading_of(self.b.x - self.a.x, self.b.y - self.a.y)


@dataclass(frozen=True)
class Projection:
    """Closest point of a segment to a query point.

    ``t`` is the position along the segment (0 at a, 1 at b);
    ``distance`` is meters from the query point to ``point``.
    """

    point: PlanarPoint
    distance: float
    t: float


def project_local(p: GeoPoint, origin: GeoPoint) -> PlanarPoint:
    """Equirectangular projection of ``p`` into the frame at ``origin``."""
    x = EARTH_RADIUS_M * math.cos(math.radians(origin.lat)) * math.radians(p.lon - origin.lon)
    y = EARTH_RADIUS_M * math.radians(p.lat - origin.lat)
    return PlanarPoint(x, y)


def unproject_local(p: PlanarPoint, origin: GeoPoint) -> GeoPoint:
    """Inverse of :func:`project_local`."""
    lat = origin.lat + math.degrees(p.y / EARTH_RADIUS_M)
    lon = origin.lon + math.degrees(p.x / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    return GeoPoint(lat, lon)


def point_segment_distance(p: PlanarPoint, s: Segment) -> Projection:
    """Minimum distance from ``p`` to the closed segment ``s``.

    The foot point is clamped to the segment, so the result is either the
    interior perpendicular foot or the nearer endpoint.
    """
    dx = s.b.x - s.a.x
    dy = s.b.y - s.a.y
    len2 = dx * dx + dy * dy
    t = ((p.x - s.a.x) * dx + (p.y - s.a.y) * dy) / len2
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    foot = PlanarPoint(s.a.x + t * dx, s.a.y + t * dy)
    return Projection(foot, math.hypot(p.x - foot.x, p.y - foot.y), t)


def heading_of(vx: float, vy: float) -> float:
    """Angle of the vector (vx, vy) from the +x axis, degrees in [0, 360)."""
    if vx == 0.0 and vy == 0.0:
        raise ValueError("heading of zero vector is undefined")
    return math.degrees(math.atan2(vy, vx)) % 360.0


def angle_diff(h1: float, h2: float) -> float:
    """Minimal absolute circular difference between two headings, in [0, 180]."""
    d = abs(h1 - h2) % 360.0
    return 360.0 - d if d > 180.0 else d
