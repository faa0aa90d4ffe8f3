"""Runtime vehicle: kinematics on a route plus the clustering-side state."""

from __future__ import annotations

from dataclasses import dataclass, field

from .prediction import MotionSample, profile_from_command
from .protocol import GroupMember, ProtocolState, VehInfo, VehicleMode
from .roadnet import (
    Edge,
    Heading,
    RoadNetwork,
    Route,
    RoutePosition,
    direction_after_next_intersection,
    planar_position,
)

PROFILE_SPAN = 60.0  # seconds of acceleration profile carried in a beacon


@dataclass
class Vehicle:
    vehicle_id: int
    route: Route
    pos: RoutePosition
    velocity: float
    max_velocity: float
    spawn_time: float
    spawn_tick: int
    acceleration: float = 0.0
    # speed cap for the node ahead, sampled when the route turns there
    turn_speed: float | None = None
    pending_lane: int | None = None
    state: ProtocolState = field(default_factory=ProtocolState)
    # geometry cache, valid until the next move
    xy: tuple[float, float] = (0.0, 0.0)
    heading: Heading = Heading.NORTH
    next_direction: Heading | None = None

    @property
    def mode(self) -> VehicleMode:
        return self.state.mode

    @property
    def progress(self) -> float:
        """Position along the travel axis; orders same-heading vehicles."""
        ux, uy = self.heading.unit
        return self.xy[0] * ux + self.xy[1] * uy

    def current_edge(self, net: RoadNetwork) -> Edge:
        return net.edges[self.route.edge_ids[self.pos.edge_index]]

    def refresh(self, net: RoadNetwork) -> None:
        edge = self.current_edge(net)
        self.xy = planar_position(net, self.route, self.pos)
        self.heading = edge.heading
        self.next_direction = direction_after_next_intersection(net, self.route, self.pos)

    def info(self) -> VehInfo:
        return VehInfo(
            vehicle_id=self.vehicle_id,
            position=self.xy,
            velocity=self.velocity,
            acceleration=self.acceleration,
            heading=self.heading,
            next_direction=self.next_direction,
            status=self.state.mode,
            degree=len(self.state.neighbors),
            expected_ch_lifetime=None,
        )

    def motion(self) -> MotionSample:
        return MotionSample(
            vehicle_id=self.vehicle_id,
            position=self.xy,
            velocity=self.velocity,
            direction=self.heading.unit,
            accel_profile=profile_from_command(
                self.velocity, self.acceleration, self.max_velocity, span=PROFILE_SPAN
            ),
        )

    def member(self) -> GroupMember:
        return GroupMember(info=self.info(), motion=self.motion(), progress=self.progress)
