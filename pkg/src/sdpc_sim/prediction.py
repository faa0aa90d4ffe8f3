"""Closed-form relative-distance forecasting between vehicles.

The pairwise separation is reduced to one dimension by projecting both
velocities and acceleration programs onto the line joining the two snapshot
positions.  Along that line the future separation is

    s(t) = s(0) + du * t + double integral of da over [0, t]

with da piecewise constant, so the double integral folds into exact
per-segment quadratic terms.  Callers always consume |s(t)|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# (duration seconds, acceleration m/s^2) steps; zero acceleration past the end
AccelProfile = tuple[tuple[float, float], ...]

LIFETIME_CAP = 60.0
LIFETIME_STEP = 0.1


@dataclass(frozen=True)
class MotionSample:
    """One vehicle's kinematic snapshot used for group-level forecasting."""

    vehicle_id: int
    position: tuple[float, float]
    velocity: float  # signed magnitude along `direction`
    direction: tuple[float, float]  # unit vector
    accel_profile: AccelProfile
    stamp: float = 0.0

    def velocity_vector(self) -> tuple[float, float]:
        return (self.velocity * self.direction[0], self.velocity * self.direction[1])


def profile_from_command(velocity: float, accel: float, max_velocity: float, span: float) -> AccelProfile:
    """Hold the commanded acceleration until a speed limit would be crossed.

    A positive command stops at max velocity, a negative one at standstill;
    the remainder of `span` coasts at zero acceleration.
    """
    if accel > 0.0:
        horizon = (max_velocity - velocity) / accel
    elif accel < 0.0:
        horizon = velocity / -accel
    else:
        horizon = span
    horizon = max(0.0, min(horizon, span))
    if horizon >= span:
        return ((span, accel),)
    if horizon == 0.0:
        return ((span, 0.0),)
    return ((horizon, accel), (span - horizon, 0.0))


class _ScalarMotion:
    """Pairwise separation reduced to scalars; evaluates |s(t)| in O(#segments)."""

    def __init__(self, i: MotionSample, j: MotionSample):
        if i.stamp != j.stamp:
            raise ValueError(f"snapshot times differ: {i.stamp} vs {j.stamp}")
        rx = i.position[0] - j.position[0]
        ry = i.position[1] - j.position[1]
        self.s0 = math.hypot(rx, ry)
        if self.s0 > 0.0:
            ux, uy = rx / self.s0, ry / self.s0
        else:
            # co-located: fall back to the closing-velocity line, then i's heading
            vx = i.velocity_vector()[0] - j.velocity_vector()[0]
            vy = i.velocity_vector()[1] - j.velocity_vector()[1]
            norm = math.hypot(vx, vy)
            ux, uy = (vx / norm, vy / norm) if norm > 0.0 else i.direction
        vi, vj = i.velocity_vector(), j.velocity_vector()
        self.du = (vi[0] - vj[0]) * ux + (vi[1] - vj[1]) * uy
        pi = i.direction[0] * ux + i.direction[1] * uy
        pj = j.direction[0] * ux + j.direction[1] * uy
        self.segments = _merge_profiles(i.accel_profile, pi, j.accel_profile, pj)

    def at(self, t: float) -> float:
        if t < 0.0:
            raise ValueError("horizon must be non-negative")
        extra_v = 0.0
        extra_x = 0.0
        elapsed = 0.0
        for dur, da in self.segments:
            if elapsed >= t:
                break
            seg = min(dur, t - elapsed)
            extra_x += extra_v * seg + 0.5 * da * seg * seg
            extra_v += da * seg
            elapsed += seg
        return abs(self.s0 + self.du * t + extra_x)


def _merge_profiles(prof_i: AccelProfile, scale_i: float, prof_j: AccelProfile, scale_j: float):
    """Projected a_i(t) - a_j(t) as one segment list over the union of breakpoints."""
    bounds = {0.0}
    for prof in (prof_i, prof_j):
        acc = 0.0
        for dur, _ in prof:
            if dur <= 0.0:
                raise ValueError("profile durations must be positive")
            acc += dur
            bounds.add(acc)
    cuts = sorted(bounds)

    def value(prof, t):
        acc = 0.0
        for dur, a in prof:
            if t < acc + dur:
                return a
            acc += dur
        return 0.0

    merged = []
    for lo, hi in zip(cuts, cuts[1:]):
        mid = (lo + hi) / 2.0
        merged.append((hi - lo, value(prof_i, mid) * scale_i - value(prof_j, mid) * scale_j))
    return merged


def relative_distance_at(i: MotionSample, j: MotionSample, t: float) -> float:
    """Predicted separation |s_ij(t)| in metres."""
    return _ScalarMotion(i, j).at(t)


def avg_relative_velocity(vehicle_id: int, group: list[MotionSample]) -> float:
    """Mean absolute speed difference between one vehicle and the rest of its group."""
    me = _find(vehicle_id, group)
    others = [m for m in group if m.vehicle_id != vehicle_id]
    if not others:
        raise ValueError("group must contain at least two vehicles")
    return sum(abs(me.velocity - o.velocity) for o in others) / len(others)


def avg_predicted_relative_distance(vehicle_id: int, group: list[MotionSample], horizon: float) -> float:
    """Mean |s_ij(horizon)| between one vehicle and the rest of its group."""
    me = _find(vehicle_id, group)
    others = [m for m in group if m.vehicle_id != vehicle_id]
    if not others:
        raise ValueError("group must contain at least two vehicles")
    return sum(relative_distance_at(me, o, horizon) for o in others) / len(others)


def expected_ch_lifetime(
    vehicle_id: int,
    group: list[MotionSample],
    tr: float,
    cap: float = LIFETIME_CAP,
    step: float = LIFETIME_STEP,
) -> float:
    """How long the vehicle would keep most of the group in range as its head.

    Scans forward in `step` increments and returns the first instant at which
    strictly more than half of the other members sit at or beyond `tr`;
    returns `cap` when that never happens within the horizon.
    """
    me = _find(vehicle_id, group)
    pairs = [_ScalarMotion(me, o) for o in group if o.vehicle_id != vehicle_id]
    if not pairs:
        raise ValueError("group must contain at least two vehicles")
    majority = len(pairs) / 2.0
    for k in range(int(round(cap / step)) + 1):
        t = k * step
        gone = sum(1 for p in pairs if p.at(t) >= tr)
        if gone > majority:
            return t
    return cap


def _find(vehicle_id: int, group: list[MotionSample]) -> MotionSample:
    for m in group:
        if m.vehicle_id == vehicle_id:
            return m
    raise ValueError(f"vehicle {vehicle_id} not in group")
