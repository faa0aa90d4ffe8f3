"""Baseline selection policies: scoring, ties and direction-blindness."""

from __future__ import annotations

import pytest

from sdpc_sim.baselines import POLICIES
from sdpc_sim.roadnet import Heading

from test_protocol import member

TR = 200.0
N = Heading.NORTH


def test_velocity_policy_picks_median_speed():
    group = [member(1, 0.0, v=20.0), member(2, 50.0, v=25.0), member(3, 100.0, v=30.0)]
    winner, scores = POLICIES["velocity"].choose(group, TR, 5.0)
    assert winner == 2
    assert scores[2] == pytest.approx(5.0)
    assert scores[1] == pytest.approx(7.5)


def test_central_policy_picks_chain_middle():
    group = [member(1, 0.0), member(2, 150.0), member(3, 300.0)]
    winner, scores = POLICIES["central"].choose(group, TR, 5.0)
    assert winner == 2
    assert scores[2] == pytest.approx(150.0)


def test_degree_policy_picks_chain_middle():
    # chain 0/150/300 with tr 200: the middle vehicle hears both ends
    group = [
        member(1, 0.0, degree=1),
        member(2, 150.0, degree=2),
        member(3, 300.0, degree=1),
    ]
    winner, scores = POLICIES["degree"].choose(group, TR, 5.0)
    assert winner == 2
    assert scores == {1: -1.0, 2: -2.0, 3: -1.0}


def test_degree_counts_traffic_outside_the_group():
    # the rear vehicle rides beside dense unrelated traffic; plain one-hop
    # degree rewards that, group geometry notwithstanding
    group = [
        member(1, 0.0, degree=4),
        member(2, 150.0, degree=2),
        member(3, 300.0, degree=1),
    ]
    winner, scores = POLICIES["degree"].choose(group, TR, 5.0)
    assert winner == 1
    assert scores == {1: -4.0, 2: -2.0, 3: -1.0}


def test_ties_fall_to_lowest_id():
    group = [member(8, 0.0), member(4, 100.0)]
    for name in ("velocity", "central", "degree"):
        winner, _ = POLICIES[name].choose(group, TR, 5.0)
        assert winner == 4, name


def test_baselines_ignore_intersections():
    straight = [member(1, 0.0, v=18.0), member(2, 150.0, v=22.0), member(3, 300.0, v=20.0)]
    turning = [
        member(1, 0.0, v=18.0),
        member(2, 150.0, v=22.0, next_dir=N),
        member(3, 300.0, v=20.0),
    ]
    for name in ("velocity", "central", "degree"):
        w_straight, _ = POLICIES[name].choose(straight, TR, 5.0)
        w_turning, _ = POLICIES[name].choose(turning, TR, 5.0)
        assert w_straight == w_turning, name
    # the full policy reacts: the through-traffic majority loses vehicle 2
    w_straight, _ = POLICIES["sdpc"].choose(straight, TR, 5.0)
    w_turning, _ = POLICIES["sdpc"].choose(turning, TR, 5.0)
    assert w_straight == 2
    assert w_turning != w_straight


def test_singletons_choose_themselves():
    lone = [member(6, 10.0)]
    for name, policy in POLICIES.items():
        winner, scores = policy.choose(lone, TR, 5.0)
        assert winner == 6, name


def test_sdpc_policy_exposes_scores_for_every_member():
    group = [member(1, 0.0), member(2, 100.0, next_dir=N), member(3, 220.0)]
    winner, scores = POLICIES["sdpc"].choose(group, TR, 5.0)
    assert set(scores) == {1, 2, 3}
    assert winner in (1, 3)  # vehicle 2 turns away from the majority
