"""Trajectory ingestion and kinematics estimation.

A trajectory is a strictly time-ordered list of GPS fixes. Speed and
heading may come from the file (measured) or be estimated from the
positions with a central-difference filter; measured values are never
overwritten.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .geo import GeoPoint, PlanarPoint, heading_of, project_local


class TrajectoryError(ValueError):
    """Raised when a trajectory source fails validation."""


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    geo: GeoPoint
    xy: PlanarPoint
    speed: float | None = None
    heading: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise TrajectoryError(f"non-finite timestamp {self.t}")
        if self.speed is not None and self.speed < 0.0:
            raise TrajectoryError(f"negative speed {self.speed}")
        if self.heading is not None and not (0.0 <= self.heading < 360.0):
            raise TrajectoryError(f"heading out of [0, 360): {self.heading}")


@dataclass(frozen=True)
class Trajectory:
    points: tuple[TrajectoryPoint, ...]
    origin: GeoPoint

    def __post_init__(self):
        ts = [p.t for p in self.points]
        for i in range(1, len(ts)):
            if ts[i] <= ts[i - 1]:
                raise TrajectoryError(f"timestamps not strictly increasing at index {i}")

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i: int) -> TrajectoryPoint:
        return self.points[i]

    def prefix(self, k: int) -> "Trajectory":
        return Trajectory(self.points[:k], self.origin)

    def with_origin(self, origin: GeoPoint) -> "Trajectory":
        """Rebind planar coordinates to another frame origin."""
        if origin == self.origin:
            return self
        pts = tuple(replace(p, xy=project_local(p.geo, origin)) for p in self.points)
        return Trajectory(pts, origin)


def from_fixes(
    fixes: Iterable[tuple[float, GeoPoint, float | None, float | None]],
    origin: GeoPoint | None = None,
) -> Trajectory:
    """Build a trajectory from (t, position, speed, heading) tuples."""
    fixes = list(fixes)
    if not fixes:
        raise TrajectoryError("empty trajectory")
    if origin is None:
        origin = fixes[0][1]
    pts = tuple(
        TrajectoryPoint(t, geo, project_local(geo, origin), speed, heading)
        for t, geo, speed, heading in fixes
    )
    return Trajectory(pts, origin)


def load_trajectory(source, origin: GeoPoint | None = None) -> Trajectory:
    """Load a trajectory CSV: header ``t,lat,lon`` plus optional ``speed``
    and ``heading`` columns. Errors report the offending row number."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_trajectory(fh, origin)
    reader = csv.DictReader(source)
    header = reader.fieldnames or []
    for col in ("t", "lat", "lon"):
        if col not in header:
            raise TrajectoryError(f"trajectory: missing column {col!r} (got {header})")
    has_speed = "speed" in header
    has_heading = "heading" in header

    fixes = []
    prev_t = None
    for row_no, row in enumerate(reader, start=2):
        try:
            t = float(row["t"])
            geo = GeoPoint(float(row["lat"]), float(row["lon"]))
            speed = float(row["speed"]) if has_speed and row["speed"] not in (None, "") else None
            heading = float(row["heading"]) if has_heading and row["heading"] not in (None, "") else None
        except (TypeError, ValueError) as exc:
            raise TrajectoryError(f"trajectory row {row_no}: {exc}") from exc
        if prev_t is not None and t <= prev_t:
            raise TrajectoryError(f"trajectory row {row_no}: timestamp {t} not after {prev_t}")
        prev_t = t
        fixes.append((t, geo, speed, heading))
    if not fixes:
        raise TrajectoryError("trajectory: no data rows")
    return from_fixes(fixes, origin)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    has_speed = any(p.speed is not None for p in traj.points)
    has_heading = any(p.heading is not None for p in traj.points)
    cols = ["t", "lat", "lon"] + (["speed"] if has_speed else []) + (["heading"] if has_heading else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for p in traj.points:
            row = [repr(p.t), repr(p.geo.lat), repr(p.geo.lon)]
            if has_speed:
                row.append("" if p.speed is None else repr(p.speed))
            if has_heading:
                row.append("" if p.heading is None else repr(p.heading))
            w.writerow(row)


def _velocity(a: TrajectoryPoint, b: TrajectoryPoint) -> tuple[float, float]:
    dt = b.t - a.t
    return (b.xy.x - a.xy.x) / dt, (b.xy.y - a.xy.y) / dt


def estimate_kinematics(traj: Trajectory) -> Trajectory:
    """Fill missing speed/heading from positions.

    Interior points use the neighboring two-point (central) difference
    v = (p[i+1] - p[i-1]) / (t[i+1] - t[i-1]); endpoints fall back to
    one-sided differences. Points that already carry a measured value
    keep it. A zero velocity carries the previous heading forward (0.0
    at the start of the trajectory).
    """
    pts = traj.points
    if len(pts) < 2:
        raise TrajectoryError("kinematics need at least 2 points")
    out = []
    last_heading = 0.0
    for i, p in enumerate(pts):
        if p.speed is not None and p.heading is not None:
            out.append(p)
            last_heading = p.heading
            continue
        if i == 0:
            vx, vy = _velocity(pts[0], pts[1])
        elif i == len(pts) - 1:
            vx, vy = _velocity(pts[-2], pts[-1])
        else:
            vx, vy = _velocity(pts[i - 1], pts[i + 1])
        speed = math.hypot(vx, vy)
        if speed > 0.0:
            heading = heading_of(vx, vy)
        else:
            heading = last_heading
        if p.heading is not None:
            heading = p.heading
        last_heading = heading
        out.append(replace(p, speed=p.speed if p.speed is not None else speed, heading=heading))
    return Trajectory(tuple(out), traj.origin)
