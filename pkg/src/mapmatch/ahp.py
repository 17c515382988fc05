"""AHP online matcher.

Candidates for a point are ranked by pairwise-comparison matrices built
per factor (distance to the edge, heading difference, turn legality),
reduced to weight vectors by row geometric means, and combined with
environment-dependent importance coefficients. The matcher runs the
shared IMP/SMP1/SMP2 loop: IMP uses distance + direction, SMP1 is a
cheap stay-on-edge test, SMP2 adds the turn-restriction factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geo import angle_diff
from .matching import (
    MatchConfig,
    MatchedRoute,
    MatcherState,
    MatchingError,
    OnlineMatcher,
    SMP1,
)
from .network import (
    CandidateEdge,
    EnvironmentKind,
    RoadNetwork,
    candidate_edges,
    classify_environment,
    distance_to_chain_end,
    turn_legal,
)
from .trajectory import Trajectory, TrajectoryPoint

# Rating bands: candidate i dominates candidate j by the band of the
# (non-negative) difference value[j] - value[i]; negative differences
# take the reciprocal of the mirrored entry.
DIST_BAND_EDGES = (1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0)  # meters
DIR_BAND_EDGES = (10.0, 30.0, 50.0, 70.0, 90.0, 110.0, 130.0, 150.0)  # degrees


@dataclass(frozen=True)
class EnvCoefficients:
    c_dist: float
    c_dir: float
    c_turn: float


ENV_COEFFICIENTS = {
    EnvironmentKind.URBAN: EnvCoefficients(0.0806, 0.3715, 0.5479),
    EnvironmentKind.SUBURBAN: EnvCoefficients(0.4376, 0.4642, 0.0982),
    EnvironmentKind.RURAL: EnvCoefficients(0.5563, 0.4237, 0.020),
}


def _band_rating(diff: float, edges: Sequence[float]) -> float:
    """1..9 rating for a non-negative difference; bands are closed above."""
    for rating, upper in enumerate(edges, start=1):
        if diff <= upper:
            return float(rating)
    return 9.0


def comparison_matrix(values: Sequence[float], factor: str) -> np.ndarray:
    """Reciprocal pairwise-comparison matrix for per-candidate factor values.

    ``factor`` selects the rating bands: "dist" (meters) or "dir"
    (degrees). Lower values are better; entry (i, j) grows with how much
    candidate j's value exceeds candidate i's.
    """
    edges = {"dist": DIST_BAND_EDGES, "dir": DIR_BAND_EDGES}[factor]
    n = len(values)
    m = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            diff = values[j] - values[i]
            if diff >= 0.0:
                m[i, j] = _band_rating(diff, edges)
                m[j, i] = 1.0 / m[i, j]
            else:
                m[j, i] = _band_rating(-diff, edges)
                m[i, j] = 1.0 / m[j, i]
    return m


def turn_matrix(turn_ok: Sequence[bool]) -> np.ndarray:
    """Turn-restriction comparison matrix: 9 when only candidate i is a
    legal turn, 1/9 when only j is, 1 when both or neither are."""
    n = len(turn_ok)
    m = np.ones((n, n))
    for i in range(n):
        for j in range(n):
            if turn_ok[i] and not turn_ok[j]:
                m[i, j] = 9.0
            elif turn_ok[j] and not turn_ok[i]:
                m[i, j] = 1.0 / 9.0
    return m


def ahp_weights(m: np.ndarray) -> np.ndarray:
    """Normalized row geometric means of a reciprocal comparison matrix."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    g = np.prod(m, axis=1) ** (1.0 / n)
    return g / g.sum()


def total_weight(
    w_dist: np.ndarray,
    w_dir: np.ndarray,
    coeffs: EnvCoefficients,
    w_turn: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """Combine factor weights with the environment's coefficients.

    Returns the per-candidate total weight and the argmax index (ties go
    to the lowest index)."""
    tw = coeffs.c_dist * np.asarray(w_dist) + coeffs.c_dir * np.asarray(w_dir)
    if w_turn is not None:
        tw = tw + coeffs.c_turn * np.asarray(w_turn)
    return tw, int(np.argmax(tw))


class AhpMatcher(OnlineMatcher):
    default_imp_confirmations = 1

    def _environment(self, pt: TrajectoryPoint) -> EnvCoefficients:
        kind = self.config.env_override
        if kind is None:
            kind = classify_environment(self.net, pt.xy).kind
        return ENV_COEFFICIENTS[kind]

    def _candidates(self, pt: TrajectoryPoint) -> list[CandidateEdge]:
        cands = candidate_edges(self.net, pt.xy, self.config.polygon_half_width_m)
        for c in cands:
            c.heading_diff = angle_diff(pt.heading, self.net.edge_heading(c.edge))
        return cands

    def imp_eligible(self, pt: TrajectoryPoint) -> bool:
        # below the floor the fix is considered unreliable and skipped
        return pt.speed >= self.config.speed_floor_mps

    def initial_pick(self, pt: TrajectoryPoint) -> Optional[str]:
        cands = self._candidates(pt)
        if not cands:
            return None
        w_dist = ahp_weights(comparison_matrix([c.dist for c in cands], "dist"))
        w_dir = ahp_weights(comparison_matrix([c.heading_diff for c in cands], "dir"))
        _, best = total_weight(w_dist, w_dir, self._environment(pt))
        return cands[best].edge

    def stays_on_edge(self, pt: TrajectoryPoint, state: MatcherState) -> bool:
        if pt.speed == 0.0:
            return True
        d1 = distance_to_chain_end(self.net, state.edge, state.prev_projection.t)
        d2 = state.prev_point.speed * (pt.t - state.prev_point.t)
        dd = d1 - d2
        dh = angle_diff(pt.heading, state.prev_point.heading)
        return dd > self.config.smp1_dd_m and dh < self.config.smp1_dh_deg

    def junction_pick(self, pt: TrajectoryPoint, state: MatcherState) -> Optional[str]:
        cands = self._candidates(pt)
        if not cands:
            return None
        for c in cands:
            c.turn_ok = c.edge == state.edge or turn_legal(
                self.net, state.edge, c.edge, self.config.allow_uturn
            )
        w_dist = ahp_weights(comparison_matrix([c.dist for c in cands], "dist"))
        w_dir = ahp_weights(comparison_matrix([c.heading_diff for c in cands], "dir"))
        w_turn = ahp_weights(turn_matrix([c.turn_ok for c in cands]))
        _, best = total_weight(w_dist, w_dir, self._environment(pt), w_turn)
        return cands[best].edge


def imp(traj: Trajectory, net: RoadNetwork, config: MatchConfig | None = None, start: int = 0) -> tuple[int, str]:
    """Initial matching: the first confirmed (point index, edge id).

    Points slower than the speed floor are skipped, as are points whose
    error polygon contains no edges. Raises when nothing matches.
    """
    matcher = AhpMatcher(net, config)
    streak_edge, streak = None, 0
    for i in range(start, len(traj)):
        pt = traj[i]
        if not matcher.imp_eligible(pt):
            continue
        pick = matcher.initial_pick(pt)
        if pick is None:
            streak_edge, streak = None, 0
            continue
        if pick == streak_edge:
            streak += 1
        else:
            streak_edge, streak = pick, 1
        if streak >= matcher.imp_confirmations:
            return i, pick
    raise MatchingError("initial matching failed: no candidate edges")


def smp1(pt: TrajectoryPoint, state: MatcherState, net: RoadNetwork, config: MatchConfig | None = None) -> bool:
    """Whether ``pt`` still matches the edge in ``state``.

    Zero speed matches automatically. Otherwise the point stays when the
    remaining distance to the next junction comfortably exceeds the
    distance just traveled (dd > 30 m) and the heading is stable
    (dh < 5 degrees).
    """
    return AhpMatcher(net, config).stays_on_edge(pt, state)


def smp2(pt: TrajectoryPoint, state: MatcherState, net: RoadNetwork, config: MatchConfig | None = None) -> str:
    """Re-decide the edge at a junction using all three factors."""
    pick = AhpMatcher(net, config).junction_pick(pt, state)
    if pick is None:
        raise MatchingError(f"no candidate edges at point {state.prev_index + 1}")
    return pick


def match_trajectory_ahp(traj: Trajectory, net: RoadNetwork, config: MatchConfig | None = None) -> MatchedRoute:
    """Match a whole trajectory online with the AHP matcher."""
    if traj.origin != net.origin:
        traj = traj.with_origin(net.origin)
    return AhpMatcher(net, config).match(traj)
