"""Comparison head-selection policies.

These are deliberately simplified versions of the classic selection ideas
(slowest-relative-velocity, most-central, highest-degree): single-hop, no
direction awareness, sharing this simulator's formation, maintenance and
merge machinery.  They exist as controlled baselines for the full selection
chain, not as faithful reimplementations of the original protocols.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .prediction import avg_predicted_relative_distance, avg_relative_velocity
from .protocol import GroupMember, elect

POLICY_SDPC = "sdpc"
POLICY_VELOCITY = "velocity"
POLICY_CENTRAL = "central"
POLICY_DEGREE = "degree"


@dataclass(frozen=True)
class SelectionPolicy:
    """A pluggable head chooser plus its re-election temperament.

    `choose` returns (winner id, score per member); scores are
    lower-is-better, in whatever unit the policy thinks in (metres of
    predicted spread, m/s of relative velocity, neighbor counts).  A
    sitting head is displaced only when the winner beats its score by the
    policy's hysteresis: the full protocol dampens re-election with the
    configured switch margin, while the classic selection rules re-elect
    greedily on any strict improvement, which is exactly the short-sighted
    behavior the comparison is meant to expose.
    """

    name: str
    choose: Callable[[list[GroupMember], float, float], tuple[int, dict[int, float]]]
    damped: bool = False  # True: the scenario's switch margin applies


def _choose_sdpc(group: list[GroupMember], tr: float, horizon: float) -> tuple[int, dict[int, float]]:
    result = elect(group, tr, horizon)
    return result.winner, result.scores


def _choose_velocity(group: list[GroupMember], tr: float, horizon: float) -> tuple[int, dict[int, float]]:
    if len(group) == 1:
        only = group[0].info.vehicle_id
        return only, {only: 0.0}
    motions = [m.motion for m in group]
    scores = {m.info.vehicle_id: avg_relative_velocity(m.info.vehicle_id, motions) for m in group}
    return _argmin(scores), scores


def _choose_central(group: list[GroupMember], tr: float, horizon: float) -> tuple[int, dict[int, float]]:
    if len(group) == 1:
        only = group[0].info.vehicle_id
        return only, {only: 0.0}
    motions = [m.motion for m in group]
    scores = {m.info.vehicle_id: avg_predicted_relative_distance(m.info.vehicle_id, motions, 0.0) for m in group}
    return _argmin(scores), scores


def _choose_degree(group: list[GroupMember], tr: float, horizon: float) -> tuple[int, dict[int, float]]:
    # Plain one-hop degree: every vehicle heard in range counts, cluster
    # member or not, so the score tracks ambient traffic rather than the
    # group's own geometry.
    scores = {m.info.vehicle_id: -float(m.info.degree) for m in group}
    return _argmin(scores), scores


def _argmin(scores: dict[int, float]) -> int:
    return min(scores, key=lambda vid: (scores[vid], vid))


POLICIES: dict[str, SelectionPolicy] = {
    POLICY_SDPC: SelectionPolicy(POLICY_SDPC, _choose_sdpc, damped=True),
    POLICY_VELOCITY: SelectionPolicy(POLICY_VELOCITY, _choose_velocity),
    POLICY_CENTRAL: SelectionPolicy(POLICY_CENTRAL, _choose_central),
    POLICY_DEGREE: SelectionPolicy(POLICY_DEGREE, _choose_degree),
}
