"""Stay-point mitigation and outlier removal via DBSCAN.

DBSCAN labels every fix as part of a dense cluster (a stay point) or as
noise (an outlier). Clusters collapse to a single representative point;
noise points can be dropped. The search radius ``eps`` can be picked
automatically from the sorted k-distance curve by rotating it and
finding local minima of a polynomial fit (the elbows).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .geo import PlanarPoint, unproject_local
from .trajectory import Trajectory, TrajectoryPoint

NOISE = -1
# recommended default: 2 x spatial dimension, here 2D
DEFAULT_MIN_PTS = 4


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = DEFAULT_MIN_PTS

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class ElbowParams:
    theta_deg: float = 45.0
    degree: int = 4

    def __post_init__(self):
        if not (0.0 < self.theta_deg < 90.0):
            raise ValueError(f"theta must be in (0, 90), got {self.theta_deg}")
        if self.degree < 2:
            raise ValueError(f"degree must be >= 2, got {self.degree}")


class ElbowCandidate(NamedTuple):
    x: float  # fractional index into the sorted k-distance list
    eps: float  # k-distance interpolated at x


def _as_array(points: Sequence[PlanarPoint] | np.ndarray) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=float)
    return np.array([(p.x, p.y) for p in points], dtype=float).reshape(-1, 2)


def dbscan(points: Sequence[PlanarPoint] | np.ndarray, params: DbscanParams) -> np.ndarray:
    """Classic DBSCAN labels: cluster ids from 0, ``NOISE`` (-1) otherwise.

    A point is a core point when at least ``min_pts`` points (itself
    included) lie within ``eps``; clusters are the maximal sets connected
    through core points.
    """
    xy = _as_array(points)
    n = len(xy)
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return labels
    # all-pairs distances; desk-scale trajectories keep this small
    d2 = np.sum((xy[:, None, :] - xy[None, :, :]) ** 2, axis=-1)
    within = d2 <= params.eps**2
    core = within.sum(axis=1) >= params.min_pts

    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        frontier = [i]
        while frontier:
            j = frontier.pop()
            for k in np.flatnonzero(within[j]):
                if labels[k] == NOISE:
                    labels[k] = cluster
                    if core[k]:
                        frontier.append(k)
        cluster += 1
    return labels


def k_distance_list(points: Sequence[PlanarPoint] | np.ndarray, min_pts: int) -> np.ndarray:
    """Ascending distances from each point to its ``min_pts``-th closest
    other point, the curve whose elbows suggest ``eps``."""
    xy = _as_array(points)
    n = len(xy)
    if min_pts >= n:
        raise ValueError(f"min_pts ({min_pts}) must be smaller than the point count ({n})")
    d = np.sqrt(np.sum((xy[:, None, :] - xy[None, :, :]) ** 2, axis=-1))
    d.sort(axis=1)
    # column 0 is the self distance
    return np.sort(d[:, min_pts])


def detect_elbows(l: Sequence[float] | np.ndarray, params: ElbowParams = ElbowParams()) -> list[ElbowCandidate]:
    """Elbow candidates of an ascending k-distance list.

    The points (i, l[i]) are rotated by -theta about the origin, fitted
    with a least-squares polynomial, and the fit's local minima are
    rotated back by +theta. Minima whose x lands in [0, len(l)) are kept;
    each yields the k-distance linearly interpolated at that x.
    """
    values = np.asarray(l, dtype=float)
    n = len(values)
    if n < params.degree + 1:
        raise ValueError(f"need at least degree+1 = {params.degree + 1} values, got {n}")
    theta = math.radians(params.theta_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    idx = np.arange(n, dtype=float)
    # rotate by -theta
    xr = idx * cos_t + values * sin_t
    yr = -idx * sin_t + values * cos_t
    try:
        poly = np.polynomial.Polynomial.fit(xr, yr, params.degree)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"polynomial fit failed: {exc}") from exc
    deriv = poly.deriv()
    curvature = deriv.deriv()
    candidates: list[ElbowCandidate] = []
    for root in deriv.roots():
        if abs(root.imag) > 1e-9:
            continue
        x_min = float(root.real)
        if curvature(x_min) <= 0.0:
            continue
        y_min = float(poly(x_min))
        # rotate back by +theta
        x = x_min * cos_t - y_min * sin_t
        if 0.0 <= x < n:
            eps = float(np.interp(x, idx, values))
            candidates.append(ElbowCandidate(x, eps))
    candidates.sort(key=lambda c: c.x)
    return candidates


def choose_eps(
    points: Sequence[PlanarPoint] | np.ndarray,
    min_pts: int = DEFAULT_MIN_PTS,
    params: ElbowParams = ElbowParams(),
) -> float | None:
    """Smallest elbow of the k-distance curve, or None if there is none."""
    kd = k_distance_list(points, min_pts)
    candidates = detect_elbows(kd, params)
    if not candidates:
        return None
    return min(c.eps for c in candidates if c.eps > 0.0) if any(c.eps > 0.0 for c in candidates) else None


def mitigate_stay_points(traj: Trajectory, labels: np.ndarray) -> Trajectory:
    """Replace each cluster with one point at its centroid, stamped with
    the cluster's first timestamp. Noise points pass through."""
    if len(labels) != len(traj):
        raise ValueError("labels do not match trajectory length")
    events: list[TrajectoryPoint] = []
    for cid in range(labels.max() + 1 if len(labels) else 0):
        members = [traj[i] for i in np.flatnonzero(labels == cid)]
        cx = sum(p.xy.x for p in members) / len(members)
        cy = sum(p.xy.y for p in members) / len(members)
        xy = PlanarPoint(cx, cy)
        events.append(
            TrajectoryPoint(
                min(p.t for p in members), unproject_local(xy, traj.origin), xy, None, None
            )
        )
    for i, p in enumerate(traj.points):
        if labels[i] == NOISE:
            events.append(p)
    events.sort(key=lambda p: p.t)
    return Trajectory(tuple(events), traj.origin)


def remove_outliers(traj: Trajectory, labels: np.ndarray) -> Trajectory:
    """Drop noise-labeled points, preserving order."""
    if len(labels) != len(traj):
        raise ValueError("labels do not match trajectory length")
    kept = tuple(p for i, p in enumerate(traj.points) if labels[i] != NOISE)
    if not kept:
        warnings.warn("all points labeled noise; trajectory is empty", stacklevel=2)
    return Trajectory(kept, traj.origin)


def preprocess_trajectory(
    traj: Trajectory,
    eps: float | None = None,
    min_pts: int = DEFAULT_MIN_PTS,
    elbow: ElbowParams = ElbowParams(),
) -> Trajectory:
    """Outlier removal followed by stay-point mitigation.

    ``eps=None`` selects eps automatically from the k-distance elbows;
    when no elbow exists the trajectory is returned unchanged.
    """
    if len(traj) <= min_pts:
        return traj
    xy = [p.xy for p in traj.points]
    if eps is None:
        eps = choose_eps(xy, min_pts, elbow)
        if eps is None:
            return traj
    params = DbscanParams(eps, min_pts)
    labels = dbscan(xy, params)
    traj = remove_outliers(traj, labels)
    if len(traj) == 0:
        return traj
    labels = dbscan([p.xy for p in traj.points], params)
    return mitigate_stay_points(traj, labels)
