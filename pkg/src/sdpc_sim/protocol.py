"""Cluster-head selection, formation and the protocol's wire-level types.

Selection runs in stages over a candidate group: keep the vehicles whose
post-intersection direction matches the majority, score them by mean
predicted distance to the whole group at the configured horizon, then break
near-ties (within half a metre) by coverage-constrained degree, expected
head lifetime, a strandedness lookahead and finally lowest id.

The strandedness stage counts the vehicles that would be left both outside
the candidate's range and out of range of every other leftover, i.e. the
singletons the next formation round could not avoid.  Merely counting
vehicles outside the candidate's range cannot separate two adjacent
candidates (the counts tie by symmetry), so the lookahead is what actually
breaks the canonical tie.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .prediction import (
    MotionSample,
    avg_predicted_relative_distance,
    expected_ch_lifetime,
)
from .roadnet import Heading

TIE_TOLERANCE = 0.5  # metres of predicted-distance score treated as a tie

# beacon interval and payload sizing
BEACON_PERIOD = 0.2  # seconds
BEACON_BYTES = 64
ROSTER_ENTRY_BYTES = 16

# timer names (all default to 2 s)
EN_TIMER = "EN_TIMER"
CM_TIMER = "CM_TIMER"
CH_TIMER = "CH_TIMER"
MERGE_TIMER = "MERGE_TIMER"

# transition causes written to the event log
CAUSE_FORMATION = "formation"
CAUSE_JOIN = "join"
CAUSE_MERGE = "merge"
CAUSE_HANDOFF = "handoff"
CAUSE_LEAVE_EXPLICIT = "leave-explicit"
CAUSE_LEAVE_TIMEOUT = "leave-timeout"
CAUSE_CH_LOSS = "ch-loss"
CAUSE_SPAWN = "spawn"
CAUSE_DESPAWN = "despawn"


class VehicleMode(Enum):
    TM = "TM"  # temporary: collecting neighbours, not yet clustered
    CH = "CH"  # cluster head
    CM = "CM"  # cluster member


class MessageKind(Enum):
    VEH_ADV = "VEH_ADV"
    EN_REQ = "EN_REQ"
    CH_RESP = "CH_RESP"
    JOIN_ACK = "JOIN_ACK"
    MERGE_REQ = "MERGE_REQ"
    MERGE_ACK = "MERGE_ACK"
    CH_HANDOFF = "CH_HANDOFF"
    LEAVE_REQ = "LEAVE_REQ"
    LEAVE_ACK = "LEAVE_ACK"
    GW_APPOINT = "GW_APPOINT"


@dataclass(frozen=True)
class VehInfo:
    """Self-description every message carries: the beacon payload."""

    vehicle_id: int
    position: tuple[float, float]
    velocity: float
    acceleration: float
    heading: Heading
    next_direction: Heading | None  # None: route ends at the next node
    status: VehicleMode
    degree: int
    expected_ch_lifetime: float | None
    rank: tuple | None = None  # last election sort key, informational


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    sender: int
    info: VehInfo
    target: int | None = None  # None for broadcasts
    ch_id: int | None = None  # cluster the message speaks for
    roster: tuple[int, ...] = ()

    @property
    def category(self) -> str:
        return "beacon" if self.kind is MessageKind.VEH_ADV else "control"

    @property
    def size_bytes(self) -> int:
        return BEACON_BYTES + ROSTER_ENTRY_BYTES * len(self.roster)


@dataclass
class NeighborEntry:
    info: VehInfo
    last_heard: float


@dataclass
class ProtocolState:
    """Clustering-side state of one vehicle."""

    mode: VehicleMode = VehicleMode.TM
    ch_id: int | None = None  # set iff CM
    cluster_id: int | None = None  # own id iff CH
    timers: dict[str, float] = field(default_factory=dict)
    neighbors: dict[int, NeighborEntry] = field(default_factory=dict)
    # join handshake bookkeeping
    join_target: int | None = None
    join_retry_at: float = 0.0
    leave_pending: bool = False
    cooldown: dict[int, float] = field(default_factory=dict)  # ch id -> ignore-until
    last_ch_distance: float | None = None  # previous tick's distance to the head


@dataclass
class Cluster:
    """Head-centric roster; the cluster is identified by its head's id."""

    ch_id: int
    created_at: float
    members: list[int] = field(default_factory=list)
    gateway_front: int | None = None
    gateway_back: int | None = None
    # head id -> last time the member heard or the head heard the member
    last_heard: dict[int, float] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.members) + 1


@dataclass(frozen=True)
class GroupMember:
    """One vehicle as the selection logic sees it."""

    info: VehInfo
    motion: MotionSample
    progress: float  # metres travelled along the route, orders the group


def _distance(a: GroupMember, b: GroupMember) -> float:
    return math.hypot(
        a.info.position[0] - b.info.position[0],
        a.info.position[1] - b.info.position[1],
    )


def front_vehicle(group: list[GroupMember]) -> GroupMember:
    """The geographically leading vehicle: most route progress, lowest id on ties."""
    if not group:
        raise ValueError("empty group")
    return min(group, key=lambda m: (-m.progress, m.info.vehicle_id))


_HEADING_ORDER = {Heading.EAST: 0, Heading.NORTH: 1, Heading.SOUTH: 2, None: 3}


def direction_majority_filter(
    group: list[GroupMember],
) -> tuple[list[GroupMember], list[GroupMember]]:
    """Split a group into head candidates and the direction minority.

    The largest same-direction partition wins; equal-size partitions fall to
    the one containing the front vehicle, then to heading order E < N < S.
    """
    partitions: dict[Heading | None, list[GroupMember]] = {}
    for m in group:
        partitions.setdefault(m.info.next_direction, []).append(m)
    biggest = max(len(p) for p in partitions.values())
    tied = [d for d, p in partitions.items() if len(p) == biggest]
    if len(tied) > 1:
        front_dir = front_vehicle(group).info.next_direction
        winner = front_dir if front_dir in tied else min(tied, key=lambda d: _HEADING_ORDER[d])
    else:
        winner = tied[0]
    candidates = partitions[winner]
    minority = [m for m in group if m.info.next_direction != winner]
    return candidates, minority


def coverage_constrained_degree(vehicle_id: int, group: list[GroupMember], first: GroupMember, tr: float) -> int:
    """In-range group members of a candidate, gated on covering the front vehicle.

    A candidate that cannot reach the front vehicle scores -1 so any covered
    candidate outranks it.  Minority-direction vehicles count like any other.
    """
    me = _by_id(vehicle_id, group)
    if _distance(me, first) > tr:
        return -1
    return sum(1 for m in group if m.info.vehicle_id != vehicle_id and _distance(me, m) <= tr)


def strandedness(candidate: GroupMember, group: list[GroupMember], tr: float) -> int:
    """Leftover group members this head choice would leave without any peer.

    Leftovers are the members outside the candidate's range; one of them is
    stranded when no other leftover sits within range of it.
    """
    outside = [
        m
        for m in group
        if m.info.vehicle_id != candidate.info.vehicle_id and _distance(candidate, m) > tr
    ]
    stranded = 0
    for m in outside:
        if not any(o.info.vehicle_id != m.info.vehicle_id and _distance(m, o) <= tr for o in outside):
            stranded += 1
    return stranded


@dataclass(frozen=True)
class Election:
    winner: int
    scores: dict[int, float]  # mean predicted distance, every group member
    candidate_ids: tuple[int, ...]
    minority_ids: tuple[int, ...]
    first_id: int
    rank: tuple  # winner's full sort key


def elect(group: list[GroupMember], tr: float, horizon: float, tie_tolerance: float = TIE_TOLERANCE) -> Election:
    """Run the full selection chain and keep the intermediate scores."""
    if not group:
        raise ValueError("empty group")
    if len(group) == 1:
        only = group[0].info.vehicle_id
        return Election(only, {only: 0.0}, (only,), (), only, (0.0,))

    first = front_vehicle(group)
    candidates, minority = direction_majority_filter(group)
    motions = [m.motion for m in group]
    scores = {m.info.vehicle_id: avg_predicted_relative_distance(m.info.vehicle_id, motions, horizon) for m in group}

    tied = list(candidates)
    best = min(scores[m.info.vehicle_id] for m in tied)
    tied = [m for m in tied if scores[m.info.vehicle_id] <= best + tie_tolerance]

    degree = {m.info.vehicle_id: 0 for m in tied}
    if len(tied) > 1:
        degree = {m.info.vehicle_id: coverage_constrained_degree(m.info.vehicle_id, group, first, tr) for m in tied}
        top = max(degree.values())
        tied = [m for m in tied if degree[m.info.vehicle_id] == top]

    lifetime = {m.info.vehicle_id: None for m in tied}
    if len(tied) > 1:
        lifetime = {m.info.vehicle_id: expected_ch_lifetime(m.info.vehicle_id, motions, tr) for m in tied}
        top = max(lifetime.values())
        tied = [m for m in tied if lifetime[m.info.vehicle_id] == top]

    stranded = {m.info.vehicle_id: 0 for m in tied}
    if len(tied) > 1:
        stranded = {m.info.vehicle_id: strandedness(m, group, tr) for m in tied}
        low = min(stranded.values())
        tied = [m for m in tied if stranded[m.info.vehicle_id] == low]

    winner = min(m.info.vehicle_id for m in tied)
    rank = (
        scores[winner],
        -degree.get(winner, 0),
        -(lifetime.get(winner) or 0.0),
        stranded.get(winner, 0),
        winner,
    )
    return Election(
        winner=winner,
        scores=scores,
        candidate_ids=tuple(m.info.vehicle_id for m in candidates),
        minority_ids=tuple(m.info.vehicle_id for m in minority),
        first_id=first.info.vehicle_id,
        rank=rank,
    )


def select_ch(group: list[GroupMember], tr: float, horizon: float, tie_tolerance: float = TIE_TOLERANCE) -> int:
    return elect(group, tr, horizon, tie_tolerance).winner


def form_clusters(group: list[GroupMember], tr: float, horizon: float) -> list[tuple[int, list[int]]]:
    """Partition unclustered vehicles into head-rooted clusters.

    Repeatedly anchor on the front-most unclustered vehicle, elect a head
    within its connected component, and sweep every unclustered vehicle in
    the head's range (direction minority included) into the cluster.  Each
    round consumes at least the head, so this terminates in <= n rounds.
    """
    remaining: dict[int, GroupMember] = {m.info.vehicle_id: m for m in group}
    clusters: list[tuple[int, list[int]]] = []
    while remaining:
        anchor = front_vehicle(list(remaining.values()))
        component = _component_of(anchor, remaining, tr)
        head = select_ch(component, tr, horizon)
        head_member = remaining[head]
        members = sorted(
            m.info.vehicle_id
            for m in remaining.values()
            if m.info.vehicle_id != head and _distance(head_member, m) <= tr
        )
        clusters.append((head, members))
        del remaining[head]
        for mid in members:
            del remaining[mid]
    return clusters


def _component_of(anchor: GroupMember, remaining: dict[int, GroupMember], tr: float) -> list[GroupMember]:
    seen = {anchor.info.vehicle_id}
    queue = [anchor]
    while queue:
        cur = queue.pop()
        for m in remaining.values():
            if m.info.vehicle_id not in seen and _distance(cur, m) <= tr:
                seen.add(m.info.vehicle_id)
                queue.append(m)
    return [remaining[i] for i in sorted(seen)]


def select_gateways(ch: VehInfo, members: list[VehInfo]) -> tuple[int | None, int | None]:
    """Front and back gateway: extreme members along the head's travel axis.

    A single member serves as front gateway only; an empty roster has none.
    """
    if not members:
        return None, None
    ux, uy = ch.heading.unit

    def projection(m: VehInfo) -> float:
        return (m.position[0] - ch.position[0]) * ux + (m.position[1] - ch.position[1]) * uy

    ordered = sorted(members, key=lambda m: (-projection(m), m.vehicle_id))
    front = ordered[0].vehicle_id
    if len(ordered) == 1:
        return front, None
    return front, ordered[-1].vehicle_id


def _by_id(vehicle_id: int, group: list[GroupMember]) -> GroupMember:
    for m in group:
        if m.info.vehicle_id == vehicle_id:
            return m
    raise ValueError(f"vehicle {vehicle_id} not in group")
