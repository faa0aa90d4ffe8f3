"""Discrete-time simulation loop tying mobility, the channel and clustering.

Tick order is fixed and everything iterates in vehicle-id order, which is
what makes reruns byte-identical:

1. apply lane changes decided last tick
2. spawn due arrivals (deferred while the entry is occupied)
3. move every vehicle against a frozen position snapshot
4. despawn finished routes, synchronously resolving their cluster ties
5. broadcast due beacons
6. deliver and handle due messages in recipient-id order
7. form clusters from long-unattached vehicles
8. merge cluster pairs whose heads have overlapped long enough
9. per-vehicle timers: join retries, leaves, evictions, re-elections
10. record cluster snapshots and check invariants

State changes that must hold invariants across two vehicles (attach,
detach, merge, handoff, head despawn) are committed atomically by the
engine inside one phase; the corresponding protocol messages are sent for
the packet ledger and for neighbour-table freshness, not as the commit
mechanism.  With a lossless channel the rosters therefore never dangle.
"""

from __future__ import annotations

import bisect
import hashlib
import math
import random
import time
from dataclasses import dataclass

from .baselines import POLICIES, SelectionPolicy
from .channel import Channel, ChannelConfig, PacketCounts, PacketLedger, WorldSnapshot
from .config import ScenarioConfig
from .metrics import NA, MetricsReport, TransitionEvent, Window, compute_report
from .mobility import (
    DECEL_LIMIT,
    Kinematics,
    apply_step,
    arrival_schedule,
    commanded_acceleration,
    overtake_wanted,
    target_gap,
    turn_entry_speed,
)
from .protocol import (
    CAUSE_CH_LOSS,
    CAUSE_DESPAWN,
    CAUSE_FORMATION,
    CAUSE_HANDOFF,
    CAUSE_JOIN,
    CAUSE_LEAVE_EXPLICIT,
    CAUSE_LEAVE_TIMEOUT,
    CAUSE_MERGE,
    CAUSE_SPAWN,
    CM_TIMER,
    EN_TIMER,
    Cluster,
    MessageKind,
    NeighborEntry,
    ProtocolMessage,
    VehicleMode,
    form_clusters,
    select_gateways,
)
from .roadnet import RoadNetwork, Route, RoutePosition, load_network, sample_route
from .vehicle import Vehicle

WINDOW_FLOOR_DEFAULT = 50.0
NEIGHBOR_TTL = 0.6  # seconds without hearing a vehicle before its entry drops
EVICT_SLACK = 0.2  # head-side eviction waits this much past the member timeout
LEAVE_RANGE_FRACTION = 0.95  # of tr; receding members beyond this announce a leave
REJOIN_COOLDOWN = 2.0  # seconds a leaver ignores its previous head
SPAWN_CLEARANCE = 4.0  # metres of free entry lane required to spawn

TM = VehicleMode.TM
CM = VehicleMode.CM
CH = VehicleMode.CH


def stream_seed(seed: int, name: str) -> int:
    """Independent deterministic seed per random stream."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).hexdigest()
    return int(digest[:16], 16)


@dataclass(frozen=True)
class Violation:
    time: float
    rule: str
    detail: str


_STATES = {None: None, TM: "TM", CM: "CM", CH: "CH"}

_LEGAL_TRANSITIONS: dict[tuple[str | None, str | None], set[str]] = {
    (None, "TM"): {CAUSE_SPAWN},
    ("TM", "CH"): {CAUSE_FORMATION},
    ("TM", "CM"): {CAUSE_JOIN},
    ("CM", "CH"): {CAUSE_MERGE, CAUSE_HANDOFF},
    ("CH", "CM"): {CAUSE_MERGE, CAUSE_HANDOFF},
    ("CM", "TM"): {CAUSE_LEAVE_EXPLICIT, CAUSE_LEAVE_TIMEOUT, CAUSE_CH_LOSS},
    ("TM", None): {CAUSE_DESPAWN},
    ("CM", None): {CAUSE_DESPAWN},
    ("CH", None): {CAUSE_DESPAWN},
}


class InvariantChecker:
    """Collects, never raises: a violating run should finish and report."""

    def __init__(self) -> None:
        self.violations: list[Violation] = []

    def _flag(self, time_: float, rule: str, detail: str) -> None:
        self.violations.append(Violation(time_, rule, detail))

    def on_event(self, event: TransitionEvent) -> None:
        allowed = _LEGAL_TRANSITIONS.get((event.from_state, event.to_state), set())
        if event.cause not in allowed:
            self._flag(
                event.time,
                "transition-legality",
                f"vehicle {event.vehicle_id}: {event.from_state}->{event.to_state} cause {event.cause}",
            )

    def on_attach(self, time_: float, vehicle_id: int, distance: float, tr: float) -> None:
        if distance > tr:
            self._flag(time_, "join-coverage", f"vehicle {vehicle_id} attached at {distance:.1f}m > {tr}m")

    def on_merge(self, time_: float, head: int, worst: float, tr: float) -> None:
        if worst > tr:
            self._flag(time_, "merge-safety", f"merge under head {head} spans {worst:.1f}m > {tr}m")

    def end_of_tick(self, time_: float, vehicles: dict[int, Vehicle], clusters: dict[int, Cluster]) -> None:
        membership: dict[int, int] = {}
        for cid, cluster in clusters.items():
            head = vehicles.get(cid)
            if cluster.ch_id != cid or head is None or head.mode is not CH:
                self._flag(time_, "referential-integrity", f"cluster {cid} head missing or not CH")
            for mid in cluster.members:
                if mid in membership:
                    self._flag(time_, "referential-integrity", f"vehicle {mid} on two rosters")
                membership[mid] = cid
                member = vehicles.get(mid)
                if member is None or member.mode is not CM or member.state.ch_id != cid:
                    self._flag(time_, "referential-integrity", f"roster of {cid} lists non-member {mid}")
        for vid, v in vehicles.items():
            st = v.state
            if v.mode is CH:
                if st.ch_id is not None or st.cluster_id != vid or vid not in clusters or vid in membership:
                    self._flag(time_, "state-exclusivity", f"head {vid} state inconsistent")
            elif v.mode is CM:
                if st.ch_id is None or st.cluster_id != st.ch_id or membership.get(vid) != st.ch_id:
                    self._flag(time_, "referential-integrity", f"member {vid} points at {st.ch_id}")
            else:
                if st.ch_id is not None or st.cluster_id is not None or vid in membership:
                    self._flag(time_, "state-exclusivity", f"unattached {vid} retains cluster state")


@dataclass
class RunResult:
    config: ScenarioConfig
    window: Window
    transitions: list[TransitionEvent]
    cluster_rows: list[tuple]
    cluster_samples: list[tuple[float, list[int]]]
    packets: PacketCounts
    ledger: PacketLedger
    report: MetricsReport
    violations: list[Violation]
    last_spawn_time: float | None
    elapsed: float


class Engine:
    def __init__(self, config: ScenarioConfig, check_invariants: bool = True):
        self.cfg = config
        self.net: RoadNetwork = load_network(config.network)
        self.dt = config.time_step
        self.policy: SelectionPolicy = POLICIES[config.policy]
        self.switch_margin = config.effective_switch_margin if self.policy.damped else 0.0
        self.channel = Channel(
            ChannelConfig(
                tr=config.tr,
                delivery_delay=config.delivery_delay,
                loss_probability=config.loss_probability,
            ),
            random.Random(stream_seed(config.seed, "channel")),
        )
        self._routes_rng = random.Random(stream_seed(config.seed, "routes"))
        self._turns_rng = random.Random(stream_seed(config.seed, "turnspeed"))
        self.arrivals = arrival_schedule(
            config.vehicle_count,
            config.arrival_rate,
            config.max_velocity,
            self.net.entries,
            random.Random(stream_seed(config.seed, "arrivals")),
        )
        self.vehicles: dict[int, Vehicle] = {}
        self.clusters: dict[int, Cluster] = {}
        self.transitions: list[TransitionEvent] = []
        self.cluster_rows: list[tuple] = []
        self.cluster_samples: list[tuple[float, list[int]]] = []
        self.checker = InvariantChecker() if check_invariants else None
        self.tick = 0
        self.last_spawn_time: float | None = None
        self._next_arrival = 0
        self._backlog: list[tuple[int, object, Route | None]] = []
        self._election_due: dict[int, float] = {}
        self._merge_clock: dict[tuple[int, int], int] = {}
        self._world = WorldSnapshot.from_dict({})

    @property
    def now(self) -> float:
        return round(self.tick * self.dt, 9)

    # ------------------------------------------------------------------ run

    def run(self) -> RunResult:
        t0 = time.perf_counter()
        for _ in range(self.cfg.tick_count):
            self.step()
        window = Window(
            max(self.cfg.window_floor, self.last_spawn_time or 0.0),
            self.cfg.sim_duration,
        )
        first_tick = int(round(window.start / self.dt))
        packets = self.channel.ledger.snapshot(first_tick, self.cfg.tick_count - 1)
        report = compute_report(self.transitions, packets, self.cluster_samples, window)
        return RunResult(
            config=self.cfg,
            window=window,
            transitions=self.transitions,
            cluster_rows=self.cluster_rows,
            cluster_samples=self.cluster_samples,
            packets=packets,
            ledger=self.channel.ledger,
            report=report,
            violations=self.checker.violations if self.checker else [],
            last_spawn_time=self.last_spawn_time,
            elapsed=time.perf_counter() - t0,
        )

    def step(self) -> None:
        self._apply_lanes()
        self._spawns()
        finished = self._mobility()
        for vid in sorted(finished):
            self._despawn(vid)
        self._world = WorldSnapshot.from_dict({vid: v.xy for vid, v in self.vehicles.items()})
        self._beacons()
        self._deliveries()
        self._formation()
        self._merge_phase()
        self._timers()
        self._record()
        self.tick += 1

    # ------------------------------------------------------- movement phases

    def _apply_lanes(self) -> None:
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            if v.pending_lane is not None:
                v.pos.lane = v.pending_lane
                v.pending_lane = None
                v.refresh(self.net)

    def _spawns(self) -> None:
        while self._next_arrival < len(self.arrivals) and self.arrivals[self._next_arrival].time <= self.now:
            self._backlog.append((self._next_arrival + 1, self.arrivals[self._next_arrival], None))
            self._next_arrival += 1
        if not self._backlog:
            return
        deferred: list[tuple[int, object, Route | None]] = []
        used_entries: set[str] = set()
        for vid, arrival, route in self._backlog:
            if route is None:
                route = sample_route(self.net, arrival.entry, self.cfg.turn_profile, self._routes_rng)
            first_edge = route.edge_ids[0]
            blocked = arrival.entry in used_entries or any(
                v.pos.lane == 0
                and v.pos.offset < SPAWN_CLEARANCE
                and v.route.edge_ids[v.pos.edge_index] == first_edge
                for v in self.vehicles.values()
            )
            if blocked:
                deferred.append((vid, arrival, route))
                continue
            used_entries.add(arrival.entry)
            v = Vehicle(
                vehicle_id=vid,
                route=route,
                pos=RoutePosition(0, 0.0, 0),
                velocity=arrival.entry_velocity,
                max_velocity=arrival.max_velocity,
                spawn_time=self.now,
                spawn_tick=self.tick,
            )
            self._sample_turn_speed(v)
            v.state.timers[EN_TIMER] = self.now + self.cfg.en_timer
            self.vehicles[vid] = v
            self.last_spawn_time = self.now
            self._log(vid, None, TM, CAUSE_SPAWN)
        self._backlog = deferred

    def _sample_turn_speed(self, v: Vehicle) -> None:
        v.refresh(self.net)
        if v.next_direction is not None and v.next_direction is not v.heading:
            v.turn_speed = turn_entry_speed(self._turns_rng)
        else:
            v.turn_speed = None

    def _mobility(self) -> list[int]:
        lanes: dict[tuple[str, int], list[tuple[float, int]]] = {}
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            key = (v.route.edge_ids[v.pos.edge_index], v.pos.lane)
            lanes.setdefault(key, []).append((v.pos.offset, vid))
        for row in lanes.values():
            row.sort()

        plans: dict[int, tuple[float, int | None]] = {}
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            edge = v.current_edge(self.net)
            row = lanes[(edge.edge_id, v.pos.lane)]
            idx = bisect.bisect_right(row, (v.pos.offset, vid))
            leader: tuple[float, float] | None = None
            same_edge_leader = False
            if idx < len(row):
                off, lead_id = row[idx]
                leader = (off - v.pos.offset, self.vehicles[lead_id].velocity)
                same_edge_leader = True
            elif v.pos.edge_index + 1 < len(v.route.edge_ids):
                ahead = lanes.get((v.route.edge_ids[v.pos.edge_index + 1], v.pos.lane), [])
                if ahead:
                    off, lead_id = ahead[0]
                    leader = (edge.length - v.pos.offset + off, self.vehicles[lead_id].velocity)

            kin = Kinematics(v.velocity, v.max_velocity, v.acceleration)
            accel = commanded_acceleration(kin, leader)
            if v.turn_speed is not None and v.velocity > v.turn_speed:
                dist = max(edge.length - v.pos.offset, 0.01)
                brake = (v.turn_speed**2 - v.velocity**2) / (2.0 * dist)
                accel = max(-DECEL_LIMIT, min(accel, brake))

            new_lane: int | None = None
            if edge.lanes > 1:
                gap_window = target_gap(v.velocity)
                if v.pos.lane == 0 and same_edge_leader:
                    clear = self._lane_clear(lanes, edge.edge_id, 1, v.pos.offset, gap_window, gap_window)
                    if overtake_wanted(kin, leader[0], leader[1], clear):
                        new_lane = 1
                elif v.pos.lane == 1:
                    if self._lane_clear(lanes, edge.edge_id, 0, v.pos.offset, gap_window, 1.5 * gap_window):
                        new_lane = 0
            plans[vid] = (accel, new_lane)

        finished: list[int] = []
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            accel, new_lane = plans[vid]
            v.acceleration = accel
            ds, v.velocity = apply_step(v.velocity, accel, v.max_velocity, self.dt)
            if new_lane is not None:
                v.pending_lane = new_lane
            if self._advance(v, ds):
                finished.append(vid)
            else:
                v.refresh(self.net)
        return finished

    @staticmethod
    def _lane_clear(
        lanes: dict[tuple[str, int], list[tuple[float, int]]],
        edge_id: str,
        lane: int,
        offset: float,
        behind: float,
        ahead: float,
    ) -> bool:
        return all(
            not (offset - behind <= off <= offset + ahead)
            for off, _ in lanes.get((edge_id, lane), [])
        )

    def _advance(self, v: Vehicle, ds: float) -> bool:
        """Move a vehicle; True when its route is exhausted."""
        v.pos.offset += ds
        while True:
            edge = v.current_edge(self.net)
            if v.pos.offset < edge.length:
                return False
            if v.pos.edge_index + 1 >= len(v.route.edge_ids):
                return True
            v.pos.offset -= edge.length
            v.pos.edge_index += 1
            new_edge = v.current_edge(self.net)
            v.pos.lane = min(v.pos.lane, new_edge.lanes - 1)
            if new_edge.heading is not edge.heading and v.turn_speed is not None:
                v.velocity = min(v.velocity, v.turn_speed)
            self._sample_turn_speed(v)

    def _despawn(self, vid: int) -> None:
        v = self.vehicles[vid]
        mode = v.mode
        if mode is CH:
            cluster = self.clusters.pop(vid, None)
            self._election_due.pop(vid, None)
            if cluster:
                for mid in list(cluster.members):
                    m = self.vehicles.get(mid)
                    if m is None:
                        continue
                    self._log(mid, CM, TM, CAUSE_CH_LOSS)
                    st = m.state
                    st.mode = TM
                    st.ch_id = None
                    st.cluster_id = None
                    st.leave_pending = False
                    st.join_target = None
                    st.join_retry_at = 0.0
                    st.last_ch_distance = None
                    st.timers.pop(CM_TIMER, None)
                    # orphans may re-form immediately, this tick
                    st.timers[EN_TIMER] = self.now
        elif mode is CM:
            cluster = self.clusters.get(v.state.ch_id)
            if cluster and vid in cluster.members:
                cluster.members.remove(vid)
                cluster.last_heard.pop(vid, None)
                self._refresh_gateways(cluster)
        self._log(vid, mode, None, CAUSE_DESPAWN)
        del self.vehicles[vid]
        self._merge_clock = {k: c for k, c in self._merge_clock.items() if vid not in k}

    # ------------------------------------------------------ protocol phases

    def _beacons(self) -> None:
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            if (self.tick - v.spawn_tick) % self.cfg.beacon_ticks == 0:
                self._broadcast(v, MessageKind.VEH_ADV)

    def _deliveries(self) -> None:
        per_recipient: dict[int, list[ProtocolMessage]] = {}
        for rid, msg in self.channel.due(self.tick):
            per_recipient.setdefault(rid, []).append(msg)
        for rid in sorted(per_recipient):
            v = self.vehicles.get(rid)
            if v is None:
                continue
            for msg in per_recipient[rid]:
                self._handle(v, msg)

    def _handle(self, v: Vehicle, msg: ProtocolMessage) -> None:
        st = v.state
        st.neighbors[msg.sender] = NeighborEntry(msg.info, self.now)
        if st.mode is CM and msg.sender == st.ch_id and not st.leave_pending:
            st.timers[CM_TIMER] = self.now + self.cfg.cm_timer
        elif st.mode is CH:
            cluster = self.clusters.get(v.vehicle_id)
            if cluster and msg.sender in cluster.last_heard:
                cluster.last_heard[msg.sender] = self.now

        if msg.kind is MessageKind.EN_REQ and st.mode is CH:
            joiner = self.vehicles.get(msg.sender)
            if joiner is not None and joiner.mode is TM and self._attach(v, joiner, CAUSE_JOIN):
                self._unicast(v, MessageKind.JOIN_ACK, msg.sender, ch_id=v.vehicle_id)
        elif msg.kind is MessageKind.LEAVE_REQ and st.mode is CH:
            cluster = self.clusters.get(v.vehicle_id)
            if cluster and msg.sender in cluster.members:
                self._detach(v.vehicle_id, msg.sender, CAUSE_LEAVE_EXPLICIT)
                self._unicast(v, MessageKind.LEAVE_ACK, msg.sender)
        # remaining kinds are informational: the engine committed the change

    def _attach(self, head: Vehicle, joiner: Vehicle, cause: str, refresh: bool = True) -> bool:
        cluster = self.clusters.get(head.vehicle_id)
        if cluster is None or joiner.mode is not TM:
            return False
        distance = math.dist(head.xy, joiner.xy)
        if distance > self.cfg.tr:
            return False
        if self.checker:
            self.checker.on_attach(self.now, joiner.vehicle_id, distance, self.cfg.tr)
        st = joiner.state
        st.mode = CM
        st.ch_id = head.vehicle_id
        st.cluster_id = head.vehicle_id
        st.join_target = None
        st.leave_pending = False
        st.last_ch_distance = distance
        st.timers.pop(EN_TIMER, None)
        st.timers[CM_TIMER] = self.now + self.cfg.cm_timer
        bisect.insort(cluster.members, joiner.vehicle_id)
        cluster.last_heard[joiner.vehicle_id] = self.now
        self._log(joiner.vehicle_id, TM, CM, cause)
        if refresh:
            self._refresh_gateways(cluster)
        return True

    def _detach(self, ch_id: int, member_id: int, cause: str) -> None:
        cluster = self.clusters.get(ch_id)
        if cluster and member_id in cluster.members:
            cluster.members.remove(member_id)
            cluster.last_heard.pop(member_id, None)
            self._refresh_gateways(cluster)
        m = self.vehicles.get(member_id)
        if m is None:
            return
        self._log(member_id, CM, TM, cause)
        st = m.state
        st.mode = TM
        st.ch_id = None
        st.cluster_id = None
        st.leave_pending = False
        st.join_target = None
        st.join_retry_at = 0.0
        st.last_ch_distance = None
        st.timers.pop(CM_TIMER, None)
        st.timers[EN_TIMER] = self.now + self.cfg.en_timer
        st.cooldown[ch_id] = self.now + REJOIN_COOLDOWN

    def _join_candidates(self, v: Vehicle) -> list[tuple[float, int]]:
        found: list[tuple[float, int]] = []
        for nid, entry in v.state.neighbors.items():
            if entry.info.status is not CH or nid not in self.vehicles:
                continue
            if v.state.cooldown.get(nid, 0.0) > self.now:
                continue
            distance = math.dist(v.xy, entry.info.position)
            if distance <= self.cfg.tr:
                found.append((distance, nid))
        return sorted(found)

    def _formation(self) -> None:
        eligible: list[Vehicle] = []
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            st = v.state
            if st.mode is not TM:
                continue
            deadline = st.timers.get(EN_TIMER)
            if deadline is None or self.now < deadline:
                continue
            if st.join_target is not None and self.now < st.join_retry_at:
                continue  # a join handshake is in flight
            if self._join_candidates(v):
                continue  # prefer joining an existing head
            eligible.append(v)
        if not eligible:
            return
        for head_id, member_ids in form_clusters(
            [v.member() for v in eligible], self.cfg.tr, self.cfg.prediction_horizon
        ):
            self._commit_formation(head_id, member_ids)

    def _commit_formation(self, head_id: int, member_ids: list[int]) -> None:
        head = self.vehicles[head_id]
        self._log(head_id, TM, CH, CAUSE_FORMATION)
        st = head.state
        st.mode = CH
        st.ch_id = None
        st.cluster_id = head_id
        st.join_target = None
        st.leave_pending = False
        st.last_ch_distance = None
        st.timers.pop(EN_TIMER, None)
        cluster = Cluster(ch_id=head_id, created_at=self.now)
        self.clusters[head_id] = cluster
        self._election_due[head_id] = self.now + self.cfg.ch_timer
        for mid in member_ids:
            self._attach(head, self.vehicles[mid], CAUSE_JOIN, refresh=False)
        self._broadcast(head, MessageKind.CH_RESP, ch_id=head_id, roster=cluster.members)
        for mid in cluster.members:
            self._unicast(head, MessageKind.JOIN_ACK, mid, ch_id=head_id)
        self._refresh_gateways(cluster)

    def _merge_phase(self) -> None:
        heads = sorted(self.clusters)
        clocks: dict[tuple[int, int], int] = {}
        for i, a in enumerate(heads):
            va = self.vehicles[a]
            for b in heads[i + 1 :]:
                if math.dist(va.xy, self.vehicles[b].xy) <= self.cfg.tr:
                    clocks[(a, b)] = self._merge_clock.get((a, b), 0) + 1
        self._merge_clock = clocks
        threshold = self.cfg.ticks_of(self.cfg.merge_timer)
        consumed: set[int] = set()
        for a, b in sorted(clocks):
            if clocks[(a, b)] < threshold or a in consumed or b in consumed:
                continue
            if self._try_merge(a, b):
                consumed.update((a, b))
                self._merge_clock = {
                    k: c for k, c in self._merge_clock.items() if a not in k and b not in k
                }
            else:
                # infeasible: require a fresh overlap interval before retrying
                self._merge_clock[(a, b)] = 0

    def _try_merge(self, a: int, b: int) -> bool:
        ids = sorted([a, b, *self.clusters[a].members, *self.clusters[b].members])
        group = [self.vehicles[i].member() for i in ids]
        winner, scores = self.policy.choose(group, self.cfg.tr, self.cfg.prediction_horizon)
        # The hysteresis that guards re-elections guards merges the same
        # way: the better-scoring incumbent head keeps the role unless the
        # open election beats it by the policy's margin, so a damped merge
        # usually demotes one head, not both.
        incumbent = min((a, b), key=lambda h: (scores[h], h))
        if winner != incumbent and scores[winner] >= scores[incumbent] - self.switch_margin:
            winner = incumbent
        head_xy = self.vehicles[winner].xy
        worst = max(math.dist(head_xy, self.vehicles[i].xy) for i in ids)
        if worst > self.cfg.tr:
            return False
        if self.checker:
            self.checker.on_merge(self.now, winner, worst, self.cfg.tr)

        self._unicast(self.vehicles[a], MessageKind.MERGE_REQ, b, ch_id=a)
        self._unicast(self.vehicles[b], MessageKind.MERGE_ACK, a, ch_id=b)
        for old in (a, b):
            if old != winner:
                self._log(old, CH, CM, CAUSE_MERGE)
        if winner not in (a, b):
            self._log(winner, CM, CH, CAUSE_MERGE)

        members = [i for i in ids if i != winner]
        cluster = Cluster(
            ch_id=winner,
            created_at=self.now,
            members=members,
            last_heard={m: self.now for m in members},
        )
        for i in ids:
            st = self.vehicles[i].state
            st.join_target = None
            st.leave_pending = False
            st.last_ch_distance = None
            if i == winner:
                st.mode = CH
                st.ch_id = None
                st.cluster_id = winner
                st.timers.pop(CM_TIMER, None)
            else:
                st.mode = CM
                st.ch_id = winner
                st.cluster_id = winner
                st.timers[CM_TIMER] = self.now + self.cfg.cm_timer
        del self.clusters[a]
        del self.clusters[b]
        self._election_due.pop(a, None)
        self._election_due.pop(b, None)
        self.clusters[winner] = cluster
        self._election_due[winner] = self.now + self.cfg.ch_timer
        for old in (a, b):
            if old != winner:
                self._unicast(self.vehicles[old], MessageKind.CH_HANDOFF, winner, ch_id=winner)
        self._broadcast(self.vehicles[winner], MessageKind.CH_RESP, ch_id=winner, roster=cluster.members)
        self._refresh_gateways(cluster)
        return True

    def _timers(self) -> None:
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            st = v.state
            stale = [nid for nid, e in st.neighbors.items() if self.now - e.last_heard > NEIGHBOR_TTL]
            for nid in stale:
                del st.neighbors[nid]

            if st.mode is TM:
                candidates = self._join_candidates(v)
                if candidates and self.now >= st.join_retry_at:
                    _, target = candidates[0]
                    st.join_target = target
                    st.join_retry_at = self.now + self.cfg.beacon_period
                    self._unicast(v, MessageKind.EN_REQ, target, ch_id=target)
            elif st.mode is CM:
                head = self.vehicles.get(st.ch_id)
                if head is None:
                    self._detach(st.ch_id, vid, CAUSE_CH_LOSS)
                    continue
                distance = math.dist(v.xy, head.xy)
                receding = st.last_ch_distance is not None and distance > st.last_ch_distance
                if (
                    not st.leave_pending
                    and receding
                    and distance > LEAVE_RANGE_FRACTION * self.cfg.tr
                ):
                    st.leave_pending = True
                    self._unicast(v, MessageKind.LEAVE_REQ, st.ch_id, ch_id=st.ch_id)
                st.last_ch_distance = distance
                if self.now >= st.timers.get(CM_TIMER, math.inf):
                    self._detach(st.ch_id, vid, CAUSE_LEAVE_TIMEOUT)
            else:
                cluster = self.clusters.get(vid)
                if cluster is None:
                    continue
                limit = self.cfg.cm_timer + EVICT_SLACK
                silent = [
                    mid
                    for mid in cluster.members
                    if self.now - cluster.last_heard.get(mid, cluster.created_at) > limit
                ]
                for mid in silent:
                    # member-side timeout has already fired; drop quietly
                    cluster.members.remove(mid)
                    cluster.last_heard.pop(mid, None)
                if silent:
                    self._refresh_gateways(cluster)
        self._elections()

    def _elections(self) -> None:
        for cid in sorted(self.clusters):
            if self.now < self._election_due.get(cid, math.inf):
                continue
            self._election_due[cid] = self.now + self.cfg.ch_timer
            cluster = self.clusters[cid]
            if not cluster.members:
                continue
            ids = sorted([cid, *cluster.members])
            group = [self.vehicles[i].member() for i in ids]
            winner, scores = self.policy.choose(group, self.cfg.tr, self.cfg.prediction_horizon)
            if winner == cid:
                continue
            if scores[winner] >= scores[cid] - self.switch_margin:
                continue
            self._handoff(cluster, winner)

    def _handoff(self, cluster: Cluster, winner: int) -> None:
        old = cluster.ch_id
        self._log(winner, CM, CH, CAUSE_HANDOFF)
        self._log(old, CH, CM, CAUSE_HANDOFF)
        members = sorted(m for m in cluster.members if m != winner)
        bisect.insort(members, old)
        renamed = Cluster(
            ch_id=winner,
            created_at=self.now,
            members=members,
            last_heard={m: self.now for m in members},
        )
        del self.clusters[old]
        self._election_due.pop(old, None)
        self.clusters[winner] = renamed
        self._election_due[winner] = self.now + self.cfg.ch_timer
        self._merge_clock = {k: c for k, c in self._merge_clock.items() if old not in k}
        for i in (winner, *members):
            st = self.vehicles[i].state
            st.join_target = None
            st.leave_pending = False
            st.last_ch_distance = None
            if i == winner:
                st.mode = CH
                st.ch_id = None
                st.cluster_id = winner
                st.timers.pop(CM_TIMER, None)
            else:
                st.mode = CM
                st.ch_id = winner
                st.cluster_id = winner
                st.timers[CM_TIMER] = self.now + self.cfg.cm_timer
        self._unicast(self.vehicles[old], MessageKind.CH_HANDOFF, winner, ch_id=winner)
        self._broadcast(self.vehicles[winner], MessageKind.CH_RESP, ch_id=winner, roster=renamed.members)
        self._refresh_gateways(renamed)

    def _refresh_gateways(self, cluster: Cluster) -> None:
        head = self.vehicles.get(cluster.ch_id)
        if head is None:
            return
        infos = [self.vehicles[m].info() for m in cluster.members if m in self.vehicles]
        front, back = select_gateways(head.info(), infos)
        for new, previous in ((front, cluster.gateway_front), (back, cluster.gateway_back)):
            if new is not None and new != previous:
                self._unicast(head, MessageKind.GW_APPOINT, new, ch_id=cluster.ch_id)
        cluster.gateway_front = front
        cluster.gateway_back = back

    # -------------------------------------------------------------- plumbing

    def _msg(
        self,
        kind: MessageKind,
        sender: Vehicle,
        target: int | None = None,
        ch_id: int | None = None,
        roster: list[int] | tuple[int, ...] = (),
    ) -> ProtocolMessage:
        return ProtocolMessage(
            kind=kind,
            sender=sender.vehicle_id,
            info=sender.info(),
            target=target,
            ch_id=ch_id,
            roster=tuple(roster),
        )

    def _broadcast(self, sender: Vehicle, kind: MessageKind, ch_id: int | None = None, roster=()) -> None:
        msg = self._msg(kind, sender, ch_id=ch_id, roster=roster)
        self.channel.broadcast(sender.vehicle_id, sender.xy, msg, self._world, self.tick)

    def _unicast(self, sender: Vehicle, kind: MessageKind, target: int, ch_id: int | None = None) -> bool:
        receiver = self.vehicles.get(target)
        if receiver is None:
            return False
        msg = self._msg(kind, sender, target=target, ch_id=ch_id)
        return self.channel.unicast(sender.vehicle_id, sender.xy, msg, target, receiver.xy, self.tick)

    def _log(self, vid: int, frm: VehicleMode | None, to: VehicleMode | None, cause: str) -> None:
        event = TransitionEvent(self.now, vid, _STATES[frm], _STATES[to], cause)
        self.transitions.append(event)
        if self.checker:
            self.checker.on_event(event)

    def _record(self) -> None:
        sizes: list[int] = []
        if self.clusters:
            for cid in sorted(self.clusters):
                cluster = self.clusters[cid]
                front = NA if cluster.gateway_front is None else cluster.gateway_front
                back = NA if cluster.gateway_back is None else cluster.gateway_back
                gateways = NA if cluster.gateway_front is None and cluster.gateway_back is None else f"{front}|{back}"
                self.cluster_rows.append((self.now, cid, cid, cluster.size, gateways))
                sizes.append(cluster.size)
        else:
            self.cluster_rows.append((self.now, NA, NA, 0, NA))
        self.cluster_samples.append((self.now, sizes))
        if self.checker:
            self.checker.end_of_tick(self.now, self.vehicles, self.clusters)


def run_scenario(config: ScenarioConfig, check_invariants: bool = True) -> RunResult:
    return Engine(config, check_invariants=check_invariants).run()
