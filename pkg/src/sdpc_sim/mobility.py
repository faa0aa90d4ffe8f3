"""Vehicle kinematics: constant-headway car following, overtaking, arrivals.

The follower controller is a saturated proportional law on gap error and
closing speed; free-road driving is the same law with the follow branch
absent.  An IDM-style controller would slot in behind
`commanded_acceleration` unchanged, but the proportional law keeps the
closed loop critically damped and easy to reason about, so it is the only
one wired up.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

ACCEL_LIMIT = 10.0  # m/s^2
DECEL_LIMIT = 5.0  # m/s^2, applied as a negative command
HEADWAY = 2.0  # seconds
MIN_GAP = 2.0  # metres at standstill
K_GAP = 0.25  # 1/s^2, gap error gain
K_REL = 0.5  # 1/s, closing speed gain
K_FREE = 1.0  # 1/s, free-road speed tracking gain
OVERTAKE_HYSTERESIS = 2.0  # m/s the leader must be below our ceiling
OVERTAKE_GAP_FACTOR = 1.5  # trigger when gap < factor * target gap
TURN_SPEED_RANGE = (3.0, 8.0)  # m/s through a turning movement
VMAX_BOUNDS = (10.0, 35.0)
ENTRY_SPEED_RANGE = (10.0, 30.0)
VMAX_JITTER = 0.1
VMAX_JITTER_FRACTION = 0.5


@dataclass
class Kinematics:
    """Speed state of one vehicle; acceleration is the last commanded value."""

    velocity: float
    max_velocity: float
    acceleration: float = 0.0


def target_gap(velocity: float, headway: float = HEADWAY, min_gap: float = MIN_GAP) -> float:
    return max(min_gap, headway * velocity)


def commanded_acceleration(
    kin: Kinematics,
    leader: tuple[float, float] | None,
    accel_limit: float = ACCEL_LIMIT,
    decel_limit: float = DECEL_LIMIT,
) -> float:
    """Clamped acceleration command, following `leader` = (gap, velocity) if any."""
    free = K_FREE * (kin.max_velocity - kin.velocity)
    if leader is None:
        a = free
    else:
        gap, leader_v = leader
        follow = K_GAP * (gap - target_gap(kin.velocity)) + K_REL * (leader_v - kin.velocity)
        a = min(free, follow)
    return max(-decel_limit, min(accel_limit, a))


def apply_step(velocity: float, accel: float, max_velocity: float, dt: float) -> tuple[float, float]:
    """One integration step: (displacement, new velocity).

    Displacement uses the pre-step velocity; vehicles never roll backwards
    and the updated velocity clamps into [0, max].
    """
    ds = max(0.0, velocity * dt + 0.5 * accel * dt * dt)
    v = max(0.0, min(velocity + accel * dt, max_velocity))
    return ds, v


def overtake_wanted(
    kin: Kinematics,
    leader_gap: float,
    leader_velocity: float,
    adjacent_clear: bool,
    hysteresis: float = OVERTAKE_HYSTERESIS,
) -> bool:
    """Move to the passing lane only for a clearly slower leader, close by, with room."""
    return (
        adjacent_clear
        and kin.max_velocity > leader_velocity + hysteresis
        and leader_gap < OVERTAKE_GAP_FACTOR * target_gap(kin.velocity)
    )


def turn_entry_speed(rng: random.Random, lo: float = TURN_SPEED_RANGE[0], hi: float = TURN_SPEED_RANGE[1]) -> float:
    return rng.uniform(lo, hi)


def spawn_attributes(
    sweep_vmax: float,
    rng: random.Random,
    jitter_fraction: float = VMAX_JITTER_FRACTION,
    jitter: float = VMAX_JITTER,
) -> tuple[float, float]:
    """Per-vehicle (max velocity, entry velocity) for a configured sweep speed.

    Half the fleet gets a +-10% ceiling jitter, clamped into the legal
    10..35 m/s band; the entry speed is drawn against the sweep value and
    then capped by the vehicle's own ceiling.
    """
    vmax = sweep_vmax
    if rng.random() < jitter_fraction:
        lo, hi = VMAX_BOUNDS
        vmax = max(lo, min(hi, sweep_vmax * (1.0 + rng.uniform(-jitter, jitter))))
    entry_hi = min(ENTRY_SPEED_RANGE[1], sweep_vmax)
    entry = min(rng.uniform(ENTRY_SPEED_RANGE[0], entry_hi), vmax)
    return vmax, entry


@dataclass(frozen=True)
class Arrival:
    """One scheduled vehicle entry."""

    time: float
    entry: str
    max_velocity: float
    entry_velocity: float


def arrival_schedule(
    count: int,
    rate: float,
    sweep_vmax: float,
    entries: tuple[str, ...],
    rng: random.Random,
) -> list[Arrival]:
    """Poisson arrivals: exponential inter-arrival times, uniform entry node.

    The schedule is the whole finite fleet; the simulation spawns from it and
    stops adding vehicles when it is exhausted.
    """
    if count < 0 or rate <= 0.0 or not entries:
        raise ValueError("need a positive rate, a non-negative count and entry nodes")
    ordered = sorted(entries)
    out: list[Arrival] = []
    t = 0.0
    for _ in range(count):
        t += rng.expovariate(rate)
        node = ordered[0] if len(ordered) == 1 else rng.choice(ordered)
        vmax, entry_v = spawn_attributes(sweep_vmax, rng)
        out.append(Arrival(time=t, entry=node, max_velocity=vmax, entry_velocity=entry_v))
    return out


def despawn_distance(route_lengths: list[float]) -> float:
    """Total route length; crossing it ends the vehicle's run."""
    return math.fsum(route_lengths)
