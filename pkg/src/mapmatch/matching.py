"""Shared online matching loop.

Both matchers follow the same control flow: an initial matching phase
(IMP) picks the first edge, then every subsequent point is checked
against the current edge (SMP1) and re-decided at a junction (SMP2).
Decisions for point i only ever look at points <= i, so matching a
prefix of a trajectory yields a prefix of the full run's assignments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .geo import PlanarPoint, Projection, point_segment_distance
from .network import EnvironmentKind, RoadNetwork
from .trajectory import Trajectory, TrajectoryPoint

IMP = "IMP"
SMP1 = "SMP1"
SMP2 = "SMP2"


class MatchingError(RuntimeError):
    """Raised when no edge can be assigned to any trajectory point."""


@dataclass(frozen=True)
class PointMatch:
    index: int
    edge: str
    point: PlanarPoint


@dataclass
class MatcherState:
    """Where the matcher currently believes the vehicle is."""

    edge: str
    prev_index: int
    prev_point: TrajectoryPoint
    prev_projection: Projection
    mode: str = SMP1


@dataclass
class MatchedRoute:
    assignments: list[PointMatch]
    route: list[str]
    start_node: Optional[str]
    end_node: Optional[str]

    def edge_of(self, index: int) -> Optional[str]:
        for m in self.assignments:
            if m.index == index:
                return m.edge
        return None

    @property
    def edge_set(self) -> set[str]:
        return set(self.route)


def route_from_assignments(assignments: list[PointMatch], net: RoadNetwork) -> MatchedRoute:
    """Collapse per-point assignments into the ordered sequence of
    distinct consecutive edges; endpoints are the first edge's tail and
    the last edge's head."""
    route: list[str] = []
    for m in assignments:
        if not route or route[-1] != m.edge:
            route.append(m.edge)
    if not route:
        return MatchedRoute(assignments, [], None, None)
    start = net.edges[route[0]].src
    end = net.edges[route[-1]].dst
    return MatchedRoute(assignments, route, start, end)


@dataclass
class MatchConfig:
    """Knobs shared by both matchers.

    ``imp_confirmations`` of None means the matcher's own default
    (1 for AHP, 3 for fuzzy).
    """

    polygon_half_width_m: float = 30.0
    speed_floor_mps: float = 3.0
    smp1_dd_m: float = 30.0
    smp1_dh_deg: float = 5.0
    env_override: Optional[EnvironmentKind] = None
    imp_confirmations: Optional[int] = None
    smp1_threshold: float = 60.0
    smp2_distance_error_as_printed: bool = False
    rule_profile: str = "uniform"
    allow_uturn: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "MatchConfig":
        cfg = cls()
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            if key == "env_override" and value is not None:
                value = EnvironmentKind(value)
            setattr(cfg, key, value)
        return cfg

    @classmethod
    def from_json(cls, path) -> "MatchConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        if self.env_override is not None:
            out["env_override"] = self.env_override.value
        return out


class OnlineMatcher:
    """Fig-7 style control loop; subclasses provide the decisions."""

    default_imp_confirmations = 1

    def __init__(self, net: RoadNetwork, config: MatchConfig | None = None):
        self.net = net
        self.config = config or MatchConfig()

    # --- hooks -----------------------------------------------------------
    def imp_eligible(self, pt: TrajectoryPoint) -> bool:
        return True

    def initial_pick(self, pt: TrajectoryPoint) -> Optional[str]:
        raise NotImplementedError

    def stays_on_edge(self, pt: TrajectoryPoint, state: MatcherState) -> bool:
        raise NotImplementedError

    def junction_pick(self, pt: TrajectoryPoint, state: MatcherState) -> Optional[str]:
        raise NotImplementedError

    # ----------------------------------------------------------------------
    @property
    def imp_confirmations(self) -> int:
        if self.config.imp_confirmations is not None:
            return self.config.imp_confirmations
        return self.default_imp_confirmations

    def _require_kinematics(self, traj: Trajectory) -> None:
        for i, p in enumerate(traj.points):
            if p.speed is None or p.heading is None:
                raise MatchingError(f"point {i} lacks speed/heading; estimate kinematics first")

    def _project(self, pt: TrajectoryPoint, edge: str) -> Projection:
        return point_segment_distance(pt.xy, self.net.segment_of(edge))

    def match(self, traj: Trajectory) -> MatchedRoute:
        self._require_kinematics(traj)
        assignments: list[PointMatch] = []
        state: MatcherState | None = None
        streak_edge: Optional[str] = None
        streak = 0
        i = 0
        n = len(traj)
        while i < n:
            pt = traj[i]
            if state is None:
                # initial matching: skip ineligible points, confirm a winner
                if not self.imp_eligible(pt):
                    i += 1
                    continue
                pick = self.initial_pick(pt)
                if pick is None:
                    streak_edge, streak = None, 0
                    i += 1
                    continue
                assignments.append(PointMatch(i, pick, pt.xy))
                if pick == streak_edge:
                    streak += 1
                else:
                    streak_edge, streak = pick, 1
                if streak >= self.imp_confirmations:
                    state = MatcherState(pick, i, pt, self._project(pt, pick), SMP1)
                    streak_edge, streak = None, 0
                i += 1
                continue
            if self.stays_on_edge(pt, state):
                edge = state.edge
                state.mode = SMP1
            else:
                edge = self.junction_pick(pt, state)
                state.mode = SMP2
                if edge is None:
                    # candidate exhaustion: restart the initial matching here
                    state = None
                    continue
            assignments.append(PointMatch(i, edge, pt.xy))
            state.edge = edge
            state.prev_index = i
            state.prev_point = pt
            state.prev_projection = self._project(pt, edge)
            i += 1
        if not assignments:
            raise MatchingError("no candidate edges found for any trajectory point")
        return route_from_assignments(assignments, self.net)
