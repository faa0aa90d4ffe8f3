"""Turn raw run artifacts into the headline clustering metrics.

Inputs are deliberately dumb: a flat list of state-transition events, a
packet tally and per-tick cluster size samples.  Everything here can be
recomputed from the CSV files a run writes, which is what keeps the
report reproducible after the fact.

Conventions:

* A "CH change" is any event leaving the CH state, including a head
  that despawns.  Rates divide by the window length.
* Duration averages are episode-weighted.  An episode ending inside
  the window counts with its full length, measured from the actual
  entry time even when that precedes the window.  With
  ``include_censored`` episodes still open at the window end count as
  lasting until the window end.
* Missing values are ``None`` in memory and ``NA`` in CSV files, never
  a fake zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean
from typing import Iterable, Sequence

from .channel import PacketCounts

NA = "NA"

TRANSITION_FIELDS = ("time", "vehicle-id", "from-state", "to-state", "cause")
CLUSTER_FIELDS = ("time", "cluster-id", "ch-id", "member-count", "gateways")
PACKET_FIELDS = ("time", "beacon-count", "control-count", "beacon-bytes", "control-bytes")


@dataclass(frozen=True)
class TransitionEvent:
    """One vehicle state change; ``None`` states mark spawn and despawn."""

    time: float
    vehicle_id: int
    from_state: str | None
    to_state: str | None
    cause: str


@dataclass(frozen=True)
class Window:
    """Closed measurement interval; events at either boundary count."""

    start: float
    end: float

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise ValueError(f"window ends before it starts: {self}")

    @property
    def length(self) -> float:
        return self.end - self.start

    def contains(self, time: float) -> bool:
        return self.start <= time <= self.end


@dataclass(frozen=True)
class Episode:
    vehicle_id: int
    state: str
    start: float
    end: float | None  # None: never exited before the trace ran out


def _chained(per_vehicle: list[TransitionEvent]) -> list[TransitionEvent]:
    """Order one vehicle's events, resolving same-time runs by chaining.

    Two events in the same tick arrive in engine order, but a trace
    reloaded from CSV or merged from shards may not preserve it.  The
    from/to states do: among simultaneous events the one whose
    from-state matches the current state must run first.
    """

    ordered: list[TransitionEvent] = []
    state: str | None = None
    known = False
    by_time = sorted(per_vehicle, key=lambda e: e.time)
    i = 0
    while i < len(by_time):
        j = i
        while j < len(by_time) and by_time[j].time == by_time[i].time:
            j += 1
        pending = by_time[i:j]
        while pending:
            idx = 0
            if known:
                for k, event in enumerate(pending):
                    if event.from_state == state:
                        idx = k
                        break
            event = pending.pop(idx)
            ordered.append(event)
            state, known = event.to_state, True
        i = j
    return ordered


def episodes(events: Iterable[TransitionEvent], state: str) -> list[Episode]:
    """Reconstruct every visit to ``state``, per vehicle, in time order."""

    per_vehicle: dict[int, list[TransitionEvent]] = {}
    for event in events:
        per_vehicle.setdefault(event.vehicle_id, []).append(event)

    found: list[Episode] = []
    for vid in sorted(per_vehicle):
        open_since: float | None = None
        for event in _chained(per_vehicle[vid]):
            if event.from_state == state and open_since is not None:
                found.append(Episode(vid, state, open_since, event.time))
                open_since = None
            if event.to_state == state:
                open_since = event.time
        if open_since is not None:
            found.append(Episode(vid, state, open_since, None))
    return found


def ch_change_count(events: Iterable[TransitionEvent], window: Window) -> int:
    return sum(1 for e in events if e.from_state == "CH" and window.contains(e.time))


def ch_change_rate(events: Iterable[TransitionEvent], window: Window) -> float:
    if window.length <= 0:
        raise ValueError("cannot rate over an empty window")
    return ch_change_count(events, window) / window.length


def duration_stats(
    events: Iterable[TransitionEvent],
    state: str,
    window: Window,
    include_censored: bool = True,
) -> tuple[float, int]:
    """Total episode time and episode count for ``state`` in ``window``."""

    total, count = 0.0, 0
    for ep in episodes(events, state):
        if ep.end is not None and window.contains(ep.end):
            total += ep.end - ep.start
            count += 1
        elif (
            include_censored
            and ep.start <= window.end
            and (ep.end is None or ep.end > window.end)
        ):
            total += window.end - ep.start
            count += 1
    return total, count


def avg_cluster_count(
    samples: Iterable[tuple[float, Sequence[int]]],
    window: Window,
    include_singletons: bool = True,
) -> float | None:
    """Time-average cluster count over sampled ticks inside the window."""

    counts = [
        sum(1 for size in sizes if include_singletons or size > 1)
        for time, sizes in samples
        if window.contains(time)
    ]
    return fmean(counts) if counts else None


def _ratio(num: float, den: float) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class MetricsReport:
    """Raw tallies for one run plus the derived headline values.

    The raw fields (not the derived ratios) are what cross-run
    aggregation needs, so they are the stored representation.
    """

    window: Window
    ch_changes: int
    ch_duration_total: float
    ch_episodes: int
    cm_duration_total: float
    cm_episodes: int
    packets: PacketCounts
    cluster_mean: float | None

    @property
    def ch_change_rate(self) -> float:
        return self.ch_changes / self.window.length

    @property
    def avg_ch_duration(self) -> float | None:
        return _ratio(self.ch_duration_total, self.ch_episodes)

    @property
    def avg_cm_duration(self) -> float | None:
        return _ratio(self.cm_duration_total, self.cm_episodes)

    @property
    def overhead(self) -> float | None:
        return _ratio(self.packets.control, self.packets.beacon + self.packets.control)

    @property
    def avg_clusters(self) -> float | None:
        return self.cluster_mean


@dataclass(frozen=True)
class AggregateMetrics:
    ch_change_rate: float
    avg_ch_duration: float | None
    avg_cm_duration: float | None
    overhead: float | None
    avg_clusters: float | None


def compute_report(
    events: Iterable[TransitionEvent],
    packets: PacketCounts,
    cluster_samples: Iterable[tuple[float, Sequence[int]]],
    window: Window,
    include_censored: bool = True,
    include_singletons: bool = True,
) -> MetricsReport:
    events = list(events)
    ch_total, ch_count = duration_stats(events, "CH", window, include_censored)
    cm_total, cm_count = duration_stats(events, "CM", window, include_censored)
    return MetricsReport(
        window=window,
        ch_changes=ch_change_count(events, window),
        ch_duration_total=ch_total,
        ch_episodes=ch_count,
        cm_duration_total=cm_total,
        cm_episodes=cm_count,
        packets=packets,
        cluster_mean=avg_cluster_count(cluster_samples, window, include_singletons),
    )


def aggregate_reports(reports: Sequence[MetricsReport]) -> AggregateMetrics:
    """Pool runs: rates average per-run, durations and packets pool.

    Equal-weighting the per-run rates keeps a long window from
    dominating; duration averages stay episode-weighted so a run with
    no episodes simply contributes nothing.
    """

    if not reports:
        raise ValueError("nothing to aggregate")
    cluster_means = [r.cluster_mean for r in reports if r.cluster_mean is not None]
    return AggregateMetrics(
        ch_change_rate=fmean(r.ch_change_rate for r in reports),
        avg_ch_duration=_ratio(
            sum(r.ch_duration_total for r in reports),
            sum(r.ch_episodes for r in reports),
        ),
        avg_cm_duration=_ratio(
            sum(r.cm_duration_total for r in reports),
            sum(r.cm_episodes for r in reports),
        ),
        overhead=_ratio(
            sum(r.packets.control for r in reports),
            sum(r.packets.beacon + r.packets.control for r in reports),
        ),
        avg_clusters=fmean(cluster_means) if cluster_means else None,
    )


GROUP_PROFILES = ("straight-only", "occasional", "frequent")


@dataclass(frozen=True)
class GroupedReport:
    """Composite over the three turn-behavior groups, per-group reports kept."""

    groups: dict[str, MetricsReport]
    composite: AggregateMetrics


def grouped_run_aggregate(reports: dict[str, MetricsReport]) -> GroupedReport:
    """Fold the three per-group runs into one composite figure.

    Rates are already per-second, so the composite rate is their plain
    mean; duration averages pool, which weights each group by its
    episode count.  The group reports ride along untouched because the
    per-group numbers are part of the result, not an intermediate.
    """

    missing = [p for p in GROUP_PROFILES if p not in reports]
    if missing:
        raise ValueError(f"missing group run(s): {', '.join(missing)}")
    ordered = [reports[p] for p in GROUP_PROFILES]
    return GroupedReport(
        groups={p: reports[p] for p in GROUP_PROFILES},
        composite=aggregate_reports(ordered),
    )


def _state_str(state: str | None) -> str:
    return NA if state is None else state


def _state_parse(text: str) -> str | None:
    return None if text == NA else text


def write_transitions(path: Path | str, events: Iterable[TransitionEvent]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRANSITION_FIELDS)
        for e in events:
            writer.writerow(
                (e.time, e.vehicle_id, _state_str(e.from_state), _state_str(e.to_state), e.cause)
            )


def load_transitions(path: Path | str) -> list[TransitionEvent]:
    out: list[TransitionEvent] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                TransitionEvent(
                    time=float(row["time"]),
                    vehicle_id=int(row["vehicle-id"]),
                    from_state=_state_parse(row["from-state"]),
                    to_state=_state_parse(row["to-state"]),
                    cause=row["cause"],
                )
            )
    return out


def write_packets(path: Path | str, rows: Iterable[tuple[float, PacketCounts]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PACKET_FIELDS)
        for time, cell in rows:
            writer.writerow((time, cell.beacon, cell.control, cell.beacon_bytes, cell.control_bytes))


def load_packets(path: Path | str) -> list[tuple[float, PacketCounts]]:
    out: list[tuple[float, PacketCounts]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                (
                    float(row["time"]),
                    PacketCounts(
                        beacon=int(row["beacon-count"]),
                        control=int(row["control-count"]),
                        beacon_bytes=int(row["beacon-bytes"]),
                        control_bytes=int(row["control-bytes"]),
                    ),
                )
            )
    return out


def packets_in_window(rows: Iterable[tuple[float, PacketCounts]], window: Window) -> PacketCounts:
    """Sum per-tick counts over the window; lets a report be rebuilt from CSV."""
    out = PacketCounts()
    for time, cell in rows:
        if window.contains(time):
            out.beacon += cell.beacon
            out.control += cell.control
            out.beacon_bytes += cell.beacon_bytes
            out.control_bytes += cell.control_bytes
    return out


def write_cluster_rows(path: Path | str, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CLUSTER_FIELDS)
        writer.writerows(rows)


def load_cluster_samples(path: Path | str) -> list[tuple[float, list[int]]]:
    """Group cluster rows into per-tick size lists.

    A row with an ``NA`` cluster id is the marker a run writes for a
    tick with no clusters at all; it keeps empty ticks visible to the
    time average.
    """

    samples: list[tuple[float, list[int]]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            time = float(row["time"])
            if not samples or samples[-1][0] != time:
                samples.append((time, []))
            if row["cluster-id"] != NA:
                samples[-1][1].append(int(row["member-count"]))
    return samples
