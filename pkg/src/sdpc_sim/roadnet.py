"""Axis-aligned grid road networks: loading, validation and route sampling.

A network is a set of nodes with planar coordinates, directed edges running
along one of the compass headings N/S/E, and a turn table keyed by
(incoming heading, node) that says which outgoing headings a vehicle may take
there.  Westbound travel is illegal everywhere, so a network containing a
westbound edge or turn is rejected outright.
"""

from __future__ import annotations

import importlib.resources
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

LANE_WIDTH = 3.5  # metres, offset applied to the left of the travel direction

# Turn-profile names and their per-intersection turn probabilities.
TURN_PROFILES = {
    "straight-only": 0.0,
    "occasional": 0.25,
    "frequent": 0.75,
}


class Heading(Enum):
    """Compass heading of a directed edge."""

    NORTH = "N"
    SOUTH = "S"
    EAST = "E"
    WEST = "W"

    @property
    def unit(self) -> tuple[float, float]:
        return _UNIT[self]

    @property
    def left(self) -> tuple[float, float]:
        """Unit vector pointing to the left of the travel direction."""
        ux, uy = _UNIT[self]
        return (-uy, ux)


_UNIT = {
    Heading.NORTH: (0.0, 1.0),
    Heading.SOUTH: (0.0, -1.0),
    Heading.EAST: (1.0, 0.0),
    Heading.WEST: (-1.0, 0.0),
}


class NetworkError(ValueError):
    """Raised when a network spec fails validation."""


@dataclass(frozen=True)
class Edge:
    edge_id: str
    src: str
    dst: str
    length: float
    heading: Heading
    lanes: int = 2


@dataclass(frozen=True)
class NetworkSpec:
    """Parsed but unvalidated network description."""

    nodes: dict[str, tuple[float, float]]
    edges: list[Edge]
    turns: dict[tuple[Heading, str], frozenset[Heading]]
    entries: list[str]
    exits: list[str]
    total_length: float


@dataclass(frozen=True)
class RoadNetwork:
    """Validated road network with constant-time topology queries."""

    nodes: dict[str, tuple[float, float]]
    edges: dict[str, Edge]
    turns: dict[tuple[Heading, str], frozenset[Heading]]
    entries: tuple[str, ...]
    exits: tuple[str, ...]
    total_length: float
    # node -> heading -> outgoing edge id
    out_edges: dict[str, dict[Heading, str]] = field(repr=False)

    def edge_options(self, heading: Heading, node: str) -> list[Heading]:
        """Outgoing headings actually drivable from `node` arriving with `heading`."""
        allowed = self.turns.get((heading, node), frozenset())
        available = self.out_edges.get(node, {})
        return [h for h in (Heading.EAST, Heading.NORTH, Heading.SOUTH) if h in allowed and h in available]


@dataclass(frozen=True)
class Route:
    """A spawn-time path: ordered edge ids ending at an exit node."""

    edge_ids: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.edge_ids)


@dataclass
class RoutePosition:
    """Where a vehicle sits on its route: edge index, metres from edge start, lane."""

    edge_index: int
    offset: float
    lane: int = 0


def build_network(spec: NetworkSpec) -> RoadNetwork:
    """Validate a spec and freeze it into a queryable RoadNetwork.

    Rejects westbound edges or turns, geometry that does not match declared
    edge lengths, a total length off by more than a metre, entry nodes that
    cannot reach an exit, and any reachable dead end.
    """
    if not spec.entries:
        raise NetworkError("network has no entry nodes")
    if not spec.exits:
        raise NetworkError("network has no exit nodes")

    out_edges: dict[str, dict[Heading, str]] = {}
    edges: dict[str, Edge] = {}
    for edge in spec.edges:
        if edge.heading is Heading.WEST:
            raise NetworkError(f"edge {edge.edge_id}: westbound edges are not allowed")
        if edge.src not in spec.nodes or edge.dst not in spec.nodes:
            raise NetworkError(f"edge {edge.edge_id}: unknown endpoint node")
        if edge.edge_id in edges:
            raise NetworkError(f"duplicate edge id {edge.edge_id}")
        if edge.lanes < 1:
            raise NetworkError(f"edge {edge.edge_id}: lane count must be >= 1")
        ax, ay = spec.nodes[edge.src]
        bx, by = spec.nodes[edge.dst]
        ux, uy = edge.heading.unit
        span = math.hypot(bx - ax, by - ay)
        if abs(span - edge.length) > 1e-6 * max(1.0, edge.length):
            raise NetworkError(f"edge {edge.edge_id}: declared length {edge.length} != geometry {span:.6f}")
        if abs((bx - ax) - ux * span) > 1e-6 or abs((by - ay) - uy * span) > 1e-6:
            raise NetworkError(f"edge {edge.edge_id}: endpoints do not lie along heading {edge.heading.value}")
        per_node = out_edges.setdefault(edge.src, {})
        if edge.heading in per_node:
            raise NetworkError(f"node {edge.src}: two outgoing edges share heading {edge.heading.value}")
        per_node[edge.heading] = edge.edge_id
        edges[edge.edge_id] = edge

    for (heading, node), outs in spec.turns.items():
        if Heading.WEST in outs or heading is Heading.WEST:
            raise NetworkError(f"turn table at {node}: westbound heading present")
        if node not in spec.nodes:
            raise NetworkError(f"turn table references unknown node {node}")

    total = sum(e.length for e in edges.values())
    if abs(total - spec.total_length) > 1.0:
        raise NetworkError(f"edge lengths sum to {total:.1f}, declared total is {spec.total_length:.1f}")

    for node in spec.entries:
        if node not in spec.nodes:
            raise NetworkError(f"entry node {node} does not exist")
        if node not in out_edges:
            raise NetworkError(f"entry node {node} has no outgoing edge")
    exit_set = set(spec.exits)
    for node in spec.exits:
        if node not in spec.nodes:
            raise NetworkError(f"exit node {node} does not exist")

    net = RoadNetwork(
        nodes=dict(spec.nodes),
        edges=edges,
        turns=dict(spec.turns),
        entries=tuple(spec.entries),
        exits=tuple(spec.exits),
        total_length=total,
        out_edges=out_edges,
    )

    # Walk the directed-edge graph from every entry: every reachable edge must
    # offer a continuation unless it lands on an exit node, and every entry
    # must be able to reach some exit.  Routes are sampled from this graph, so
    # a reachable dead end would strand vehicles.
    for entry in net.entries:
        reached_exit = False
        seen: set[str] = set()
        stack = [eid for eid in out_edges.get(entry, {}).values()]
        while stack:
            eid = stack.pop()
            if eid in seen:
                continue
            seen.add(eid)
            edge = edges[eid]
            if edge.dst in exit_set:
                reached_exit = True
                continue
            options = net.edge_options(edge.heading, edge.dst)
            if not options:
                raise NetworkError(f"dead end: edge {eid} reaches {edge.dst} with no legal continuation")
            for h in options:
                stack.append(out_edges[edge.dst][h])
        if not reached_exit:
            raise NetworkError(f"entry node {entry} cannot reach any exit")
    return net


def parse_network(text: str) -> NetworkSpec:
    """Parse the line-oriented network format (see networks/default-grid)."""
    nodes: dict[str, tuple[float, float]] = {}
    edges: list[Edge] = []
    turns: dict[tuple[Heading, str], frozenset[Heading]] = {}
    entries: list[str] = []
    exits: list[str] = []
    total_length: float | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind, args = fields[0], fields[1:]
        try:
            if kind == "total-length":
                total_length = float(args[0])
            elif kind == "node":
                nodes[args[0]] = (float(args[1]), float(args[2]))
            elif kind == "edge":
                edges.append(
                    Edge(
                        edge_id=args[0],
                        src=args[1],
                        dst=args[2],
                        length=float(args[3]),
                        heading=Heading(args[4]),
                        lanes=int(args[5]) if len(args) > 5 else 2,
                    )
                )
            elif kind == "turn":
                key = (Heading(args[0]), args[1])
                turns[key] = frozenset(Heading(h) for h in args[2:])
            elif kind == "entry":
                entries.extend(args)
            elif kind == "exit":
                exits.extend(args)
            else:
                raise NetworkError(f"line {lineno}: unknown directive {kind!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, NetworkError):
                raise
            raise NetworkError(f"line {lineno}: cannot parse {raw!r}: {exc}") from exc

    if total_length is None:
        raise NetworkError("missing total-length directive")
    return NetworkSpec(nodes, edges, turns, entries, exits, total_length)


def load_network(source: str | Path) -> RoadNetwork:
    """Load and validate a network file; "default-grid" resolves to the shipped one."""
    if str(source) == "default-grid":
        text = importlib.resources.files("sdpc_sim").joinpath("networks/default-grid").read_text()
    else:
        text = Path(source).read_text()
    return build_network(parse_network(text))


def planar_position(net: RoadNetwork, route: Route, pos: RoutePosition) -> tuple[float, float]:
    """Planar coordinates of a route position, shifted left by lane width per lane."""
    edge = net.edges[route.edge_ids[pos.edge_index]]
    if pos.offset < 0.0 or pos.offset > edge.length:
        raise ValueError(f"offset {pos.offset} outside edge {edge.edge_id} of length {edge.length}")
    if pos.lane < 0 or pos.lane >= edge.lanes:
        raise ValueError(f"lane {pos.lane} outside 0..{edge.lanes - 1} on edge {edge.edge_id}")
    sx, sy = net.nodes[edge.src]
    ux, uy = edge.heading.unit
    lx, ly = edge.heading.left
    shift = LANE_WIDTH * pos.lane
    return (sx + ux * pos.offset + lx * shift, sy + uy * pos.offset + ly * shift)


def next_intersection(net: RoadNetwork, route: Route, pos: RoutePosition) -> tuple[str, float]:
    """The node the vehicle is driving toward and the remaining distance to it."""
    edge = net.edges[route.edge_ids[pos.edge_index]]
    return edge.dst, edge.length - pos.offset


def direction_after_next_intersection(net: RoadNetwork, route: Route, pos: RoutePosition) -> Heading | None:
    """Heading the route takes after the upcoming node; None when the route ends there."""
    nxt = pos.edge_index + 1
    if nxt >= len(route.edge_ids):
        return None
    return net.edges[route.edge_ids[nxt]].heading


def sample_route(net: RoadNetwork, entry: str, profile: str, rng: random.Random) -> Route:
    """Random walk from an entry node to an exit under a turn-probability profile.

    At a node where going straight is possible, the walk turns with the
    profile's probability, splitting that mass uniformly over the legal turn
    headings.  Where straight is impossible the turn is forced.
    """
    if entry not in net.entries:
        raise ValueError(f"{entry} is not an entry node")
    turn_p = TURN_PROFILES[profile]

    starts = sorted(net.out_edges.get(entry, {}).values())
    eid = starts[0] if len(starts) == 1 else rng.choice(starts)
    edge_ids = [eid]
    while True:
        edge = net.edges[edge_ids[-1]]
        node = edge.dst
        if node in net.exits:
            return Route(tuple(edge_ids))
        options = net.edge_options(edge.heading, node)
        if not options:
            raise NetworkError(f"dead end at {node}; build_network should have rejected this")
        straight = edge.heading if edge.heading in options else None
        turn_choices = sorted((h for h in options if h is not straight), key=lambda h: h.value)
        if straight is not None and (not turn_choices or rng.random() >= turn_p):
            nxt = straight
        else:
            nxt = turn_choices[0] if len(turn_choices) == 1 else rng.choice(turn_choices)
        edge_ids.append(net.out_edges[node][nxt])
