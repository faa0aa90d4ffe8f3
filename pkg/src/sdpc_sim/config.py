"""Scenario configuration: defaults, JSON round-trip, validation, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .baselines import POLICIES
from .mobility import target_gap
from .roadnet import TURN_PROFILES


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a run depends on; two runs with equal configs are identical.

    Times are seconds, distances metres, speeds m/s.  The delivery delay is
    whole simulation ticks.  ``window_floor`` is the earliest the metrics
    window may open; the actual window starts at the last spawn when that
    comes later.  ``switch_margin`` is the predicted-spread improvement, in
    metres, a challenger must offer before a sitting head is displaced.
    ``None`` scales it to one nominal vehicle spacing at the sweep velocity
    (spread differences inside one spacing are position drift, not a better
    head); ``inf`` keeps every head until it merges or leaves (an ablation
    knob).
    """

    sim_duration: float = 300.0
    time_step: float = 0.1
    vehicle_count: int = 100
    arrival_rate: float = 2.0
    network: str = "default-grid"
    turn_profile: str = "occasional"
    max_velocity: float = 20.0
    policy: str = "sdpc"
    tr: float = 200.0
    beacon_period: float = 0.2
    en_timer: float = 2.0
    cm_timer: float = 2.0
    ch_timer: float = 2.0
    merge_timer: float = 2.0
    prediction_horizon: float = 5.0
    tie_tolerance: float = 0.5
    switch_margin: float | None = None
    delivery_delay: int = 0
    loss_probability: float = 0.0
    window_floor: float = 50.0
    seed: int = 1

    def __post_init__(self) -> None:
        if self.time_step <= 0.0 or self.sim_duration <= 0.0:
            raise ValueError("time step and duration must be positive")
        if self.vehicle_count < 0:
            raise ValueError("vehicle count cannot be negative")
        if self.arrival_rate <= 0.0:
            raise ValueError("arrival rate must be positive")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; pick one of {sorted(POLICIES)}")
        if self.turn_profile not in TURN_PROFILES:
            raise ValueError(f"unknown turn profile {self.turn_profile!r}")
        if self.tr <= 0.0 or self.max_velocity <= 0.0:
            raise ValueError("range and sweep velocity must be positive")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss probability must be within [0, 1]")
        if self.delivery_delay < 0 or self.delivery_delay != int(self.delivery_delay):
            raise ValueError("delivery delay is whole ticks")
        if self.prediction_horizon < 0.0 or self.tie_tolerance < 0.0:
            raise ValueError("horizon and tie tolerance cannot be negative")
        if self.switch_margin is not None and self.switch_margin < 0.0:
            raise ValueError("switch margin cannot be negative")  # inf allowed: handoff ablation
        if not 0.0 <= self.window_floor < self.sim_duration:
            raise ValueError("window floor must fall inside the run")
        for name in ("beacon_period", "en_timer", "cm_timer", "ch_timer", "merge_timer"):
            self.ticks_of(getattr(self, name), name)
        self.ticks_of(self.sim_duration, "sim_duration")

    def ticks_of(self, seconds: float, name: str = "interval") -> int:
        """Convert a duration to ticks, insisting it sits on the tick grid."""
        ticks = round(seconds / self.time_step)
        if ticks < 1 or abs(ticks * self.time_step - seconds) > 1e-9:
            raise ValueError(f"{name} ({seconds}s) is not a positive multiple of the {self.time_step}s step")
        return ticks

    @property
    def effective_switch_margin(self) -> float:
        if self.switch_margin is not None:
            return self.switch_margin
        return target_gap(self.max_velocity)

    @property
    def tick_count(self) -> int:
        return self.ticks_of(self.sim_duration, "sim_duration")

    @property
    def beacon_ticks(self) -> int:
        return self.ticks_of(self.beacon_period, "beacon_period")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def config_hash(self) -> str:
        """Hash of everything except the seed; names the scenario, not the run."""
        payload = {k: v for k, v in self.to_dict().items() if k != "seed"}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def run_name(self) -> str:
        return f"{self.config_hash}-s{self.seed}"


def config_from_dict(data: dict) -> ScenarioConfig:
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ScenarioConfig(**data)


def load_config(path: str | Path) -> ScenarioConfig:
    return config_from_dict(json.loads(Path(path).read_text()))
