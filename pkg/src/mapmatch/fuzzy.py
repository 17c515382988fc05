"""Fuzzy-logic online matcher.

A small Takagi-Sugeno-style inference engine (sigmoidal memberships,
min for AND, constant consequents 10/50/100) drives three rule bases:
one for the initial matching, one for tracking along the current link,
and one for junction decisions. Rule bases are data: they load from
JSON and each rule carries a confidence used by the confidence-weighted
aggregation; with uniform confidences that aggregation reduces exactly
to the plain strength-weighted average.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .geo import angle_diff, heading_of, point_segment_distance
from .matching import (
    MatchConfig,
    MatchedRoute,
    MatcherState,
    MatchingError,
    OnlineMatcher,
)
from .network import (
    CandidateEdge,
    RoadNetwork,
    candidate_edges,
    shortest_path_lengths,
    turn_legal,
)
from .trajectory import Trajectory, TrajectoryPoint

CONSEQUENT_VALUES = {"low": 10.0, "average": 50.0, "high": 100.0}

# distance the engine substitutes when a candidate is unreachable through
# the graph; drives the "distance error is high" membership to 1
UNREACHABLE_M = 1.0e9


@dataclass(frozen=True)
class MembershipFunction:
    """Sigmoid 1 / (1 + exp(-a (x - c))); sign of ``a`` picks the side."""

    a: float
    c: float

    def __post_init__(self):
        if self.a == 0.0:
            raise ValueError("membership slope must be nonzero")


def membership(mf: MembershipFunction, x: float) -> float:
    z = mf.a * (x - mf.c)
    if z >= 0.0:
        return 1.0 if z >= 700.0 else 1.0 / (1.0 + math.exp(-z))
    if z <= -700.0:
        return 0.0
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass(frozen=True)
class FuzzyRule:
    antecedents: tuple[tuple[str, str], ...]  # (variable, label) pairs, AND-ed
    consequent: str  # low | average | high
    confidence: float

    def __post_init__(self):
        if not self.antecedents:
            raise ValueError("rule needs at least one antecedent")
        if self.consequent not in CONSEQUENT_VALUES:
            raise ValueError(f"unknown consequent {self.consequent!r}")


@dataclass(frozen=True)
class RuleActivation:
    strength: float
    value: float  # consequent constant


def rule_strength(rule: FuzzyRule, fuzzified: Mapping[str, Mapping[str, float]]) -> float:
    """AND of the rule's antecedent degrees via min."""
    strength = 1.0
    for var, label in rule.antecedents:
        if var not in fuzzified:
            raise ValueError(f"missing fuzzified variable {var!r}")
        strength = min(strength, fuzzified[var][label])
    return strength


def defuzzify_tsk(activations: Sequence[RuleActivation]) -> Optional[float]:
    """Strength-weighted average of the consequent constants; None when
    no rule fired."""
    den = sum(a.strength for a in activations)
    if den <= 0.0:
        return None
    return sum(a.strength * a.value for a in activations) / den


def defuzzify_weighted(activations: Sequence[RuleActivation], confidences: Sequence[float]) -> Optional[float]:
    """Confidence-weighted variant; equals :func:`defuzzify_tsk` when the
    confidences are uniform."""
    den = sum(c * a.strength for a, c in zip(activations, confidences))
    if den <= 0.0:
        return None
    return sum(c * a.strength * a.value for a, c in zip(activations, confidences)) / den


class RuleSet:
    """A named rule base over sigmoid-fuzzified variables."""

    def __init__(
        self,
        name: str,
        variables: Mapping[str, Mapping[str, MembershipFunction]],
        rules: Sequence[FuzzyRule],
    ):
        self.name = name
        self.variables = {v: dict(labels) for v, labels in variables.items()}
        self.rules = tuple(rules)
        total = sum(r.confidence for r in self.rules)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"rule set {name!r}: confidences sum to {total!r}, expected 1")
        for rule in self.rules:
            for var, label in rule.antecedents:
                if var not in self.variables or label not in self.variables[var]:
                    raise ValueError(f"rule set {name!r}: unknown antecedent ({var!r}, {label!r})")

    @property
    def confidences(self) -> tuple[float, ...]:
        return tuple(r.confidence for r in self.rules)

    def fuzzify(self, inputs: Mapping[str, float]) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for var, labels in self.variables.items():
            if var in inputs:
                out[var] = {label: membership(mf, inputs[var]) for label, mf in labels.items()}
        return out

    def activations(self, inputs: Mapping[str, float]) -> list[RuleActivation]:
        fuzzified = self.fuzzify(inputs)
        return [
            RuleActivation(rule_strength(r, fuzzified), CONSEQUENT_VALUES[r.consequent])
            for r in self.rules
        ]

    def score(self, inputs: Mapping[str, float]) -> Optional[float]:
        """Confidence-weighted crisp score in [10, 100], or None when no
        rule fires."""
        return defuzzify_weighted(self.activations(inputs), self.confidences)


def _parse_rule_set(name: str, data: dict) -> RuleSet:
    variables = {
        var: {label: MembershipFunction(p["a"], p["c"]) for label, p in labels.items()}
        for var, labels in data["variables"].items()
    }
    rules = [
        FuzzyRule(
            tuple((v, l) for v, l in r["antecedents"]),
            r["consequent"],
            float(r["confidence"]),
        )
        for r in data["rules"]
    ]
    return RuleSet(name, variables, rules)


def load_rule_bases(source, distance_error_as_printed: bool = False) -> dict[str, RuleSet]:
    """Load the imp/smp1/smp2 rule bases from a JSON file or dict.

    ``distance_error_as_printed`` restores the as-published polarity of
    the two junction distance-error rules (low error -> low output).
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        data = dict(source)
    if distance_error_as_printed and "smp2" in data:
        data = json.loads(json.dumps(data))  # deep copy before editing
        for rule in data["smp2"]["rules"]:
            if any(var == "distance_error" for var, _ in rule["antecedents"]):
                rule["consequent"] = {"high": "low", "low": "high"}[rule["consequent"]]
    out = {}
    for name in ("imp", "smp1", "smp2"):
        if name not in data:
            raise ValueError(f"rule file lacks the {name!r} rule base")
        out[name] = _parse_rule_set(name, data[name])
    return out


def default_rule_bases(profile: str = "uniform", distance_error_as_printed: bool = False) -> dict[str, RuleSet]:
    """Bundled rule bases: ``uniform`` confidences, or the ``kcmmn``
    profile that trusts geometry/connectivity over estimated kinematics."""
    fname = {"uniform": "fuzzy_rules.json", "kcmmn": "fuzzy_rules_kcmmn.json"}[profile]
    text = resources.files("mapmatch.data").joinpath(fname).read_text(encoding="utf-8")
    return load_rule_bases(json.loads(text), distance_error_as_printed)


class FuzzyMatcher(OnlineMatcher):
    default_imp_confirmations = 3

    def __init__(
        self,
        net: RoadNetwork,
        config: MatchConfig | None = None,
        rule_bases: Mapping[str, RuleSet] | None = None,
    ):
        super().__init__(net, config)
        if rule_bases is None:
            rule_bases = default_rule_bases(
                self.config.rule_profile, self.config.smp2_distance_error_as_printed
            )
        self.rule_bases = dict(rule_bases)

    # --- crisp inputs ------------------------------------------------------
    def _imp_inputs(self, pt: TrajectoryPoint, cand: CandidateEdge) -> dict[str, float]:
        return {
            "speed": pt.speed,
            "heading_error": angle_diff(pt.heading, self.net.edge_heading(cand.edge)),
            "perpendicular_distance": cand.dist,
        }

    def _smp1_inputs(self, pt: TrajectoryPoint, state: MatcherState) -> dict[str, float]:
        seg = self.net.segment_of(state.edge)
        link_heading = seg.heading
        to_p_from_a = heading_of(pt.xy.x - seg.a.x, pt.xy.y - seg.a.y) if pt.xy != seg.a else link_heading
        to_p_from_b = heading_of(pt.xy.x - seg.b.x, pt.xy.y - seg.b.y) if pt.xy != seg.b else link_heading
        alpha = angle_diff(link_heading, to_p_from_a)
        beta = angle_diff((link_heading + 180.0) % 360.0, to_p_from_b)
        remaining = (1.0 - state.prev_projection.t) * self.net.edges[state.edge].length
        d2 = state.prev_point.speed * (pt.t - state.prev_point.t)
        return {
            "speed": pt.speed,
            "heading_increment": angle_diff(pt.heading, state.prev_point.heading),
            "alpha": alpha,
            "beta": beta,
            "delta_d": remaining - d2,
        }

    def _distance_error(self, pt: TrajectoryPoint, state: MatcherState, cand: CandidateEdge, path_lengths: dict[str, float]) -> float:
        straight = math.hypot(
            pt.xy.x - state.prev_point.xy.x, pt.xy.y - state.prev_point.xy.y
        )
        prev_edge = self.net.edges[state.edge]
        if cand.edge == state.edge:
            network = abs(cand.projection.t - state.prev_projection.t) * prev_edge.length
        else:
            tail = self.net.edges[cand.edge].src
            via = path_lengths.get(tail)
            if via is None:
                return UNREACHABLE_M
            network = (
                (1.0 - state.prev_projection.t) * prev_edge.length
                + via
                + cand.projection.t * self.net.edges[cand.edge].length
            )
        return abs(straight - network)

    # --- hooks --------------------------------------------------------------
    def initial_pick(self, pt: TrajectoryPoint) -> Optional[str]:
        cands = candidate_edges(self.net, pt.xy, self.config.polygon_half_width_m)
        if not cands:
            return None
        ruleset = self.rule_bases["imp"]
        best, best_score = None, -math.inf
        for c in cands:
            score = ruleset.score(self._imp_inputs(pt, c))
            if score is not None and score > best_score:
                best, best_score = c.edge, score
        return best if best is not None else cands[0].edge

    def stays_on_edge(self, pt: TrajectoryPoint, state: MatcherState) -> bool:
        score = self.rule_bases["smp1"].score(self._smp1_inputs(pt, state))
        return score is not None and score > self.config.smp1_threshold

    def junction_pick(self, pt: TrajectoryPoint, state: MatcherState) -> Optional[str]:
        cands = candidate_edges(self.net, pt.xy, self.config.polygon_half_width_m)
        if not cands:
            return None
        ruleset = self.rule_bases["smp2"]
        head = self.net.edges[state.edge].dst
        tails = {self.net.edges[c.edge].src for c in cands if c.edge != state.edge}
        path_lengths = shortest_path_lengths(self.net, head, tails)
        best, best_score = None, -math.inf
        for c in cands:
            c.turn_ok = c.edge == state.edge or turn_legal(
                self.net, state.edge, c.edge, self.config.allow_uturn
            )
            inputs = self._imp_inputs(pt, c)
            inputs["connectivity"] = 1.0 if c.turn_ok else 0.0
            inputs["distance_error"] = self._distance_error(pt, state, c, path_lengths)
            score = ruleset.score(inputs)
            if score is not None and score > best_score:
                best, best_score = c.edge, score
        return best if best is not None else cands[0].edge


def fuzzy_imp(traj: Trajectory, net: RoadNetwork, config: MatchConfig | None = None, start: int = 0) -> tuple[int, str]:
    """Initial matching: first (point index, edge) confirmed by the
    required number of consecutive identical winners (default 3)."""
    matcher = FuzzyMatcher(net, config)
    streak_edge, streak = None, 0
    for i in range(start, len(traj)):
        pick = matcher.initial_pick(traj[i])
        if pick is None:
            streak_edge, streak = None, 0
            continue
        if pick == streak_edge:
            streak += 1
        else:
            streak_edge, streak = pick, 1
        if streak >= matcher.imp_confirmations:
            return i, pick
    raise MatchingError("initial matching failed: no stable candidate link")


def fuzzy_smp1(pt: TrajectoryPoint, state: MatcherState, net: RoadNetwork, config: MatchConfig | None = None) -> Optional[float]:
    """Score for staying on the current link; above the threshold
    (default 60) the point still matches it."""
    matcher = FuzzyMatcher(net, config)
    return matcher.rule_bases["smp1"].score(matcher._smp1_inputs(pt, state))


def fuzzy_smp2(pt: TrajectoryPoint, state: MatcherState, net: RoadNetwork, config: MatchConfig | None = None) -> str:
    """Junction decision: the candidate link with the highest score."""
    pick = FuzzyMatcher(net, config).junction_pick(pt, state)
    if pick is None:
        raise MatchingError(f"no candidate edges at point {state.prev_index + 1}")
    return pick


def match_trajectory_fuzzy(traj: Trajectory, net: RoadNetwork, config: MatchConfig | None = None) -> MatchedRoute:
    """Match a whole trajectory online with the fuzzy matcher."""
    if traj.origin != net.origin:
        traj = traj.with_origin(net.origin)
    return FuzzyMatcher(net, config).match(traj)
