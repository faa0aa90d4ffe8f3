"""Idealised broadcast medium: closed-disc range, optional delay and loss.

Recipients are fixed from the world snapshot at send time; a delivery-delay
of d ticks makes a message pop out of `due` at tick sent+d (or at the next
delivery phase if that one has already passed).  Every call counts as one
transmission in the ledger no matter how many receivers it reaches.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

BEACON = "beacon"
CONTROL = "control"


@dataclass(frozen=True)
class ChannelConfig:
    tr: float = 200.0  # transmission range, metres
    delivery_delay: int = 0  # ticks
    loss_probability: float = 0.0  # independent per receiver


class WorldSnapshot:
    """Positions of all live vehicles at one instant, indexable by vehicle id."""

    def __init__(self, ids: list[int], xy: np.ndarray):
        assert len(ids) == len(xy)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.xy = np.asarray(xy, dtype=np.float64)

    @classmethod
    def from_dict(cls, positions: dict[int, tuple[float, float]]) -> "WorldSnapshot":
        ids = sorted(positions)
        xy = np.array([positions[i] for i in ids], dtype=np.float64).reshape(len(ids), 2)
        return cls(ids, xy)

    def in_range(self, origin: tuple[float, float], tr: float) -> list[int]:
        if len(self.ids) == 0:
            return []
        d2 = (self.xy[:, 0] - origin[0]) ** 2 + (self.xy[:, 1] - origin[1]) ** 2
        return [int(i) for i in self.ids[d2 <= tr * tr]]


@dataclass
class PacketCounts:
    beacon: int = 0
    control: int = 0
    beacon_bytes: int = 0
    control_bytes: int = 0

    @property
    def total(self) -> int:
        return self.beacon + self.control


class PacketLedger:
    """Per-tick transmission counts split into beacon and control traffic."""

    def __init__(self) -> None:
        self.by_kind: Counter[str] = Counter()
        self._per_tick: dict[int, PacketCounts] = {}
        self.stale_drops = 0

    def record(self, tick: int, kind: str, category: str, size_bytes: int) -> None:
        self.by_kind[kind] += 1
        cell = self._per_tick.setdefault(tick, PacketCounts())
        if category == BEACON:
            cell.beacon += 1
            cell.beacon_bytes += size_bytes
        else:
            cell.control += 1
            cell.control_bytes += size_bytes

    def snapshot(self, first_tick: int, last_tick: int) -> PacketCounts:
        """Totals over first_tick..last_tick inclusive."""
        out = PacketCounts()
        for tick, cell in self._per_tick.items():
            if first_tick <= tick <= last_tick:
                out.beacon += cell.beacon
                out.control += cell.control
                out.beacon_bytes += cell.beacon_bytes
                out.control_bytes += cell.control_bytes
        return out

    def per_tick(self) -> list[tuple[int, PacketCounts]]:
        """Tick-ordered counts, skipping silent ticks."""
        return sorted(self._per_tick.items())


@dataclass
class _Queued:
    delivery_tick: int
    seq: int
    recipient: int
    msg: object


@dataclass
class Channel:
    config: ChannelConfig
    rng: random.Random = field(default_factory=lambda: random.Random(0))

    def __post_init__(self) -> None:
        self.ledger = PacketLedger()
        self._queue: list[_Queued] = []
        self._seq = 0

    def broadcast(self, sender: int, origin: tuple[float, float], msg, world: WorldSnapshot, tick: int) -> list[int]:
        """Send to every other vehicle within range; returns who was scheduled."""
        self.ledger.record(tick, msg.kind, msg.category, msg.size_bytes)
        scheduled = []
        for rid in world.in_range(origin, self.config.tr):
            if rid == sender:
                continue
            if self._lost():
                continue
            self._push(tick, rid, msg)
            scheduled.append(rid)
        return scheduled

    def unicast(
        self, sender: int, origin: tuple[float, float], msg, target: int, target_pos: tuple[float, float], tick: int
    ) -> bool:
        """Send to one vehicle; False when out of range or lost."""
        self.ledger.record(tick, msg.kind, msg.category, msg.size_bytes)
        dx = target_pos[0] - origin[0]
        dy = target_pos[1] - origin[1]
        if dx * dx + dy * dy > self.config.tr**2 or self._lost():
            return False
        self._push(tick, target, msg)
        return True

    def due(self, tick: int) -> list[tuple[int, object]]:
        """Pop every (recipient, msg) whose delivery tick has been reached."""
        ready = [q for q in self._queue if q.delivery_tick <= tick]
        if ready:
            self._queue = [q for q in self._queue if q.delivery_tick > tick]
            ready.sort(key=lambda q: (q.delivery_tick, q.seq))
        return [(q.recipient, q.msg) for q in ready]

    def pending(self) -> int:
        return len(self._queue)

    def _lost(self) -> bool:
        p = self.config.loss_probability
        return p > 0.0 and self.rng.random() < p

    def _push(self, tick: int, recipient: int, msg) -> None:
        self._queue.append(_Queued(tick + self.config.delivery_delay, self._seq, recipient, msg))
        self._seq += 1
