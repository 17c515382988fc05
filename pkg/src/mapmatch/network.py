"""Directed road graph with geometry.

Networks load from two CSV files (``id,lat,lon`` nodes and
``id,from,to,oneway`` edges). A two-way street row becomes two directed
edges: the forward edge keeps the street id, the reverse edge gets a
``~`` suffix. All geometry lives in the network's local planar frame,
whose origin defaults to the first node.

A ``RoadNetwork`` is immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .geo import (
    GeoPoint,
    PlanarPoint,
    Projection,
    Segment,
    point_segment_distance,
    project_local,
    unproject_local,
)

GRID_CELL_M = 250.0
REVERSE_SUFFIX = "~"

# Junction-density thresholds (junctions per km of road) separating
# urban / suburban / rural map environments.
URBAN_RATIO = 6.81
RURAL_RATIO = 2.88
ENVIRONMENT_RADIUS_M = 200.0


class LoadError(ValueError):
    """Raised when a nodes/edges source fails validation."""


@dataclass(frozen=True)
class NetworkNode:
    id: str
    geo: GeoPoint
    xy: PlanarPoint


@dataclass(frozen=True)
class NetworkEdge:
    """One directed edge. ``street`` ties the two directions of a two-way
    street together (both share it)."""

    id: str
    street: str
    src: str
    dst: str
    length: float
    oneway: bool


@dataclass
class CandidateEdge:
    """A directed edge under consideration for one trajectory point.

    ``dist`` and ``projection`` are filled by the candidate query;
    ``heading_diff`` and ``turn_ok`` are filled by the matcher once the
    point's heading and the previous edge are known.
    """

    edge: str
    projection: Projection
    dist: float
    heading_diff: float = 0.0
    turn_ok: bool = True


class EnvironmentKind(str, Enum):
    URBAN = "urban"
    SUBURBAN = "suburban"
    RURAL = "rural"


@dataclass(frozen=True)
class MapEnvironment:
    kind: EnvironmentKind
    ratio: float  # junction points per km of road


@dataclass(frozen=True)
class RoadSegmentChain:
    """Maximal directed run of edges whose interior nodes have degree 2."""

    edges: tuple[str, ...]
    start_node: str
    end_node: str
    length: float


class RoadNetwork:
    def __init__(self, nodes: Sequence[NetworkNode], edges: Sequence[NetworkEdge], origin: GeoPoint):
        self.origin = origin
        self.nodes: dict[str, NetworkNode] = {n.id: n for n in nodes}
        self.edges: dict[str, NetworkEdge] = {e.id: e for e in edges}
        self.out_edges: dict[str, list[str]] = {n.id: [] for n in nodes}
        self.in_edges: dict[str, list[str]] = {n.id: [] for n in nodes}
        self.neighbors: dict[str, set[str]] = {n.id: set() for n in nodes}
        for e in edges:
            self.out_edges[e.src].append(e.id)
            self.in_edges[e.dst].append(e.id)
            self.neighbors[e.src].add(e.dst)
            self.neighbors[e.dst].add(e.src)
        for adj in self.out_edges.values():
            adj.sort()
        self._grid: dict[tuple[int, int], list[str]] = {}
        for e in edges:
            seg = self.segment_of(e.id)
            for cell in _cells_covering(seg, GRID_CELL_M):
                self._grid.setdefault(cell, []).append(e.id)
        self._chains: list[RoadSegmentChain] | None = None
        self._chain_of: dict[str, RoadSegmentChain] = {}

    def segment_of(self, edge_id: str) -> Segment:
        e = self.edges[edge_id]
        return Segment(self.nodes[e.src].xy, self.nodes[e.dst].xy)

    def edge_heading(self, edge_id: str) -> float:
        return self.segment_of(edge_id).heading

    def streets(self) -> dict[str, list[str]]:
        """Directed edge ids grouped by street id."""
        out: dict[str, list[str]] = {}
        for e in self.edges.values():
            out.setdefault(e.street, []).append(e.id)
        return out

    def chains(self) -> list[RoadSegmentChain]:
        if self._chains is None:
            self._chains = collapse_segments(self)
        return self._chains

    def chain_of(self, edge_id: str) -> RoadSegmentChain:
        if not self._chain_of:
            for chain in self.chains():
                for eid in chain.edges:
                    self._chain_of[eid] = chain
        return self._chain_of[edge_id]

    def grid_candidates(self, xmin: float, ymin: float, xmax: float, ymax: float) -> set[str]:
        found: set[str] = set()
        for cell in _cell_range(xmin, ymin, xmax, ymax, GRID_CELL_M):
            found.update(self._grid.get(cell, ()))
        return found


def _cell_of(x: float, y: float, size: float) -> tuple[int, int]:
    return (math.floor(x / size), math.floor(y / size))


def _cell_range(xmin: float, ymin: float, xmax: float, ymax: float, size: float):
    cx0, cy0 = _cell_of(xmin, ymin, size)
    cx1, cy1 = _cell_of(xmax, ymax, size)
    for cx in range(cx0, cx1 + 1):
        for cy in range(cy0, cy1 + 1):
            yield (cx, cy)


def _cells_covering(seg: Segment, size: float):
    xmin = min(seg.a.x, seg.b.x)
    xmax = max(seg.a.x, seg.b.x)
    ymin = min(seg.a.y, seg.b.y)
    ymax = max(seg.a.y, seg.b.y)
    return _cell_range(xmin, ymin, xmax, ymax, size)


def build_network(
    node_rows: Iterable[tuple[str, float, float]],
    edge_rows: Iterable[tuple[str, str, str, bool]],
    origin: GeoPoint | None = None,
) -> RoadNetwork:
    """Construct a validated network from parsed rows.

    ``node_rows`` are (id, lat, lon); ``edge_rows`` are
    (street id, from node, to node, oneway). Row numbers in error
    messages count from 1 including the header, matching the CSV files.
    """
    node_rows = list(node_rows)
    edge_rows = list(edge_rows)
    if not node_rows:
        raise LoadError("no nodes")
    if origin is None:
        origin = GeoPoint(node_rows[0][1], node_rows[0][2])

    nodes: dict[str, NetworkNode] = {}
    for row_no, (nid, lat, lon) in enumerate(node_rows, start=2):
        if nid in nodes:
            raise LoadError(f"nodes row {row_no}: duplicate node id {nid!r}")
        try:
            geo = GeoPoint(lat, lon)
        except ValueError as exc:
            raise LoadError(f"nodes row {row_no}: {exc}") from exc
        nodes[nid] = NetworkNode(nid, geo, project_local(geo, origin))

    edges: list[NetworkEdge] = []
    seen_streets: set[str] = set()
    for row_no, (sid, src, dst, oneway) in enumerate(edge_rows, start=2):
        if sid in seen_streets:
            raise LoadError(f"edges row {row_no}: duplicate edge id {sid!r}")
        seen_streets.add(sid)
        if src not in nodes:
            raise LoadError(f"edges row {row_no}: unknown from node {src!r}")
        if dst not in nodes:
            raise LoadError(f"edges row {row_no}: unknown to node {dst!r}")
        if src == dst:
            raise LoadError(f"edges row {row_no}: self loop at node {src!r}")
        a, b = nodes[src].xy, nodes[dst].xy
        length = math.hypot(b.x - a.x, b.y - a.y)
        if length <= 0.0:
            raise LoadError(f"edges row {row_no}: zero-length edge {sid!r}")
        edges.append(NetworkEdge(sid, sid, src, dst, length, oneway))
        if not oneway:
            edges.append(NetworkEdge(sid + REVERSE_SUFFIX, sid, dst, src, length, oneway))
    return RoadNetwork(list(nodes.values()), edges, origin)


def _read_csv(source, expected: Sequence[str], label: str) -> list[dict[str, str]]:
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _read_csv(fh, expected, label)
    reader = csv.DictReader(source)
    header = reader.fieldnames or []
    missing = [c for c in expected if c not in header]
    if missing:
        raise LoadError(f"{label}: missing columns {missing} (got {header})")
    return list(reader)


def load_network(nodes_source, edges_source, origin: GeoPoint | None = None) -> RoadNetwork:
    """Load a network from CSV paths or open files.

    Nodes: header ``id,lat,lon``. Edges: header ``id,from,to,oneway``
    with ``oneway`` in {0, 1}. UTF-8, ``.`` decimal separator.
    """
    node_rows = []
    for row_no, row in enumerate(_read_csv(nodes_source, ("id", "lat", "lon"), "nodes"), start=2):
        try:
            node_rows.append((row["id"], float(row["lat"]), float(row["lon"])))
        except (TypeError, ValueError) as exc:
            raise LoadError(f"nodes row {row_no}: bad coordinate ({exc})") from exc
    edge_rows = []
    for row_no, row in enumerate(_read_csv(edges_source, ("id", "from", "to", "oneway"), "edges"), start=2):
        flag = (row["oneway"] or "").strip()
        if flag not in ("0", "1"):
            raise LoadError(f"edges row {row_no}: oneway must be 0 or 1, got {flag!r}")
        edge_rows.append((row["id"], row["from"], row["to"], flag == "1"))
    return build_network(node_rows, edge_rows, origin)


def junction_degree(net: RoadNetwork, node_id: str) -> int:
    """Number of distinct undirected neighbors (paired directed edges count once)."""
    if node_id not in net.nodes:
        raise KeyError(f"unknown node {node_id!r}")
    return len(net.neighbors[node_id])


def is_junction(net: RoadNetwork, node_id: str) -> bool:
    """Junction points have degree 1 or >= 3; degree-2 nodes are intermediary."""
    return junction_degree(net, node_id) != 2


def _continuation(net: RoadNetwork, edge_id: str) -> str | None:
    """The unique forward continuation of ``edge_id`` through a degree-2 node."""
    e = net.edges[edge_id]
    if junction_degree(net, e.dst) != 2:
        return None
    others = net.neighbors[e.dst] - {e.src}
    if len(others) != 1:
        return None
    (nxt,) = others
    for out_id in net.out_edges[e.dst]:
        if net.edges[out_id].dst == nxt:
            return out_id
    return None


def _predecessor(net: RoadNetwork, edge_id: str) -> str | None:
    e = net.edges[edge_id]
    if junction_degree(net, e.src) != 2:
        return None
    others = net.neighbors[e.src] - {e.dst}
    if len(others) != 1:
        return None
    (prev,) = others
    for in_id in net.in_edges[e.src]:
        if net.edges[in_id].src == prev:
            return in_id
    return None


def collapse_segments(net: RoadNetwork) -> list[RoadSegmentChain]:
    """Partition the directed edges into maximal chains.

    A chain's interior nodes all have undirected degree 2; it ends at
    junction points (degree 1 or >= 3) or where the directed walk cannot
    continue. Pure degree-2 cycles (ring roads) become a single chain
    starting at their smallest edge id.
    """
    assigned: set[str] = set()
    chains: list[RoadSegmentChain] = []

    def walk(start: str) -> RoadSegmentChain:
        run = [start]
        assigned.add(start)
        cur = start
        while True:
            nxt = _continuation(net, cur)
            if nxt is None or nxt in assigned or nxt == start:
                break
            run.append(nxt)
            assigned.add(nxt)
            cur = nxt
        first, last = net.edges[run[0]], net.edges[run[-1]]
        total = sum(net.edges[eid].length for eid in run)
        return RoadSegmentChain(tuple(run), first.src, last.dst, total)

    starts = sorted(eid for eid in net.edges if _predecessor(net, eid) is None)
    for eid in starts:
        if eid not in assigned:
            chains.append(walk(eid))
    # leftovers are edges on degree-2 cycles
    for eid in sorted(net.edges):
        if eid not in assigned:
            chains.append(walk(eid))
    return chains


def _segment_intersects_box(seg: Segment, xmin: float, ymin: float, xmax: float, ymax: float) -> bool:
    # Liang-Barsky clip: nonempty parameter interval means intersection.
    x0, y0 = seg.a.x, seg.a.y
    dx, dy = seg.b.x - x0, seg.b.y - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        r = q / p
        if p < 0.0:
            if r > t1:
                return False
            t0 = max(t0, r)
        else:
            if r < t0:
                return False
            t1 = min(t1, r)
    return t0 <= t1


def candidate_edges(net: RoadNetwork, p: PlanarPoint, half_width: float) -> list[CandidateEdge]:
    """Directed edges intersecting the error polygon: the axis-aligned
    square of half side ``half_width`` centered at ``p``."""
    if half_width <= 0.0:
        raise ValueError("half_width must be positive")
    xmin, xmax = p.x - half_width, p.x + half_width
    ymin, ymax = p.y - half_width, p.y + half_width
    out: list[CandidateEdge] = []
    for eid in sorted(net.grid_candidates(xmin, ymin, xmax, ymax)):
        seg = net.segment_of(eid)
        if _segment_intersects_box(seg, xmin, ymin, xmax, ymax):
            proj = point_segment_distance(p, seg)
            out.append(CandidateEdge(eid, proj, proj.distance))
    return out


def turn_legal(net: RoadNetwork, from_edge: str, to_edge: str, allow_uturn: bool = False) -> bool:
    """Whether a vehicle on ``from_edge`` can legally continue onto ``to_edge``.

    The target must depart from the head node of ``from_edge`` (one-way
    streets are respected because only traversable directed edges exist)
    and must not be the exact reversal unless U-turns are allowed.
    """
    a = net.edges[from_edge]
    b = net.edges[to_edge]
    if b.src != a.dst:
        return False
    if not allow_uturn and b.dst == a.src and b.src == a.dst:
        return False
    return True


def _clipped_length(seg: Segment, center: PlanarPoint, radius: float) -> float:
    """Length of the part of ``seg`` inside the disc around ``center``."""
    ax, ay = seg.a.x - center.x, seg.a.y - center.y
    dx, dy = seg.b.x - seg.a.x, seg.b.y - seg.a.y
    a = dx * dx + dy * dy
    b = 2.0 * (ax * dx + ay * dy)
    c = ax * ax + ay * ay - radius * radius
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        return 0.0
    sq = math.sqrt(disc)
    t0 = max(0.0, (-b - sq) / (2.0 * a))
    t1 = min(1.0, (-b + sq) / (2.0 * a))
    if t1 <= t0:
        return 0.0
    return (t1 - t0) * math.sqrt(a)


def classify_ratio(ratio: float) -> EnvironmentKind:
    """Urban above 6.81 junctions/km, rural below 2.88, suburban between
    (both boundaries inclusive in the suburban band)."""
    if ratio > URBAN_RATIO:
        return EnvironmentKind.URBAN
    if ratio < RURAL_RATIO:
        return EnvironmentKind.RURAL
    return EnvironmentKind.SUBURBAN


def classify_environment(net: RoadNetwork, p: PlanarPoint, radius_m: float = ENVIRONMENT_RADIUS_M) -> MapEnvironment:
    """Map environment around ``p``: junction count within ``radius_m``
    over km of road clipped to the same disc (streets counted once)."""
    r2 = radius_m * radius_m
    n_junctions = 0
    for node in net.nodes.values():
        dx, dy = node.xy.x - p.x, node.xy.y - p.y
        if dx * dx + dy * dy <= r2 and junction_degree(net, node.id) != 2 and net.neighbors[node.id]:
            n_junctions += 1
    total_m = 0.0
    pad = radius_m
    seen_streets: set[str] = set()
    for eid in net.grid_candidates(p.x - pad, p.y - pad, p.x + pad, p.y + pad):
        street = net.edges[eid].street
        if street in seen_streets:
            continue
        seen_streets.add(street)
        total_m += _clipped_length(net.segment_of(eid), p, radius_m)
    if total_m <= 0.0:
        return MapEnvironment(EnvironmentKind.RURAL, 0.0)
    ratio = n_junctions / (total_m / 1000.0)
    return MapEnvironment(classify_ratio(ratio), ratio)


def shortest_path(net: RoadNetwork, source: str, target: str) -> tuple[list[str], float] | None:
    """Minimum-length directed path as (edge ids, total meters).

    Priority-queue Dijkstra with edge lengths as weights. Returns None
    when the target is unreachable; (``[]``, 0.0) when source == target.
    """
    if source not in net.nodes:
        raise KeyError(f"unknown node {source!r}")
    if target not in net.nodes:
        raise KeyError(f"unknown node {target!r}")
    if source == target:
        return [], 0.0
    dist = {source: 0.0}
    back: dict[str, str] = {}
    done: set[str] = set()
    heap: list[tuple[float, str]] = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == target:
            break
        for eid in net.out_edges[u]:
            e = net.edges[eid]
            nd = d + e.length
            if nd < dist.get(e.dst, math.inf):
                dist[e.dst] = nd
                back[e.dst] = eid
                heapq.heappush(heap, (nd, e.dst))
    if target not in dist or target not in done:
        return None
    path: list[str] = []
    node = target
    while node != source:
        eid = back[node]
        path.append(eid)
        node = net.edges[eid].src
    path.reverse()
    return path, dist[target]


def shortest_path_lengths(net: RoadNetwork, source: str, targets: set[str] | None = None) -> dict[str, float]:
    """Single-source Dijkstra distances; stops early once ``targets`` settle."""
    dist = {source: 0.0}
    done: set[str] = set()
    remaining = set(targets) if targets is not None else None
    heap: list[tuple[float, str]] = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if remaining is not None:
            remaining.discard(u)
            if not remaining:
                break
        for eid in net.out_edges[u]:
            e = net.edges[eid]
            nd = d + e.length
            if nd < dist.get(e.dst, math.inf):
                dist[e.dst] = nd
                heapq.heappush(heap, (nd, e.dst))
    return {n: d for n, d in dist.items() if n in done}


def distance_to_chain_end(net: RoadNetwork, edge_id: str, t: float) -> float:
    """Meters from position ``t`` on ``edge_id`` to the downstream end of
    its chain (the next junction point in travel direction)."""
    chain = net.chain_of(edge_id)
    idx = chain.edges.index(edge_id)
    d = (1.0 - t) * net.edges[edge_id].length
    for eid in chain.edges[idx + 1 :]:
        d += net.edges[eid].length
    return d


def network_to_geojson(net: RoadNetwork) -> dict:
    """GeoJSON FeatureCollection with one LineString per directed edge."""
    features = []
    for eid in sorted(net.edges):
        e = net.edges[eid]
        a, b = net.nodes[e.src].geo, net.nodes[e.dst].geo
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[a.lon, a.lat], [b.lon, b.lat]],
                },
                "properties": {"id": e.id, "oneway": e.oneway},
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_network_csv(net: RoadNetwork, nodes_path, edges_path) -> None:
    """Write the network back to the CSV schemas (streets, not directed edges)."""
    with open(nodes_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon"])
        for nid in sorted(net.nodes):
            node = net.nodes[nid]
            w.writerow([nid, repr(node.geo.lat), repr(node.geo.lon)])
    with open(edges_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "from", "to", "oneway"])
        for sid in sorted(net.streets()):
            e = net.edges[sid]  # forward edge keeps the street id
            w.writerow([sid, e.src, e.dst, 1 if e.oneway else 0])
