"""
Ground-truth world for DUALID.

This module holds node kinematics and the geometric queries every measurement
channel is derived from. World snapshots are immutable: ``step`` returns a new
``WorldState`` and never mutates its input.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from dualid.errors import GeometryError

DEFAULT_DT_S = 0.01


class Role(str, Enum):
    """Ground-truth role of a node."""

    LEGITIMATE = "legitimate"
    MALICIOUS = "malicious"
    SYBIL_PHANTOM = "sybil_phantom"


class WingType(str, Enum):
    """Airframe category."""

    FIXED = "fixed"
    ROTARY = "rotary"


@dataclass(frozen=True)
class Vec3:
    """A 3-D vector in world axes (meters, or m/s for velocities)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise GeometryError(f"non-finite vector component in {self!r}")

    @classmethod
    def zero(cls) -> "Vec3":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Vec3":
        return cls(float(values[0]), float(values[1]), float(values[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, factor: float) -> "Vec3":
        return Vec3(self.x * factor, self.y * factor, self.z * factor)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def distance_to(self, other: "Vec3") -> float:
        return (self - other).norm()


@dataclass(frozen=True)
class ConstantVelocity:
    """Trajectory model: integrate the node's velocity unchanged."""


@dataclass(frozen=True)
class WaypointPath:
    """
    Trajectory model: piecewise-linear flight through waypoints at constant speed.

    ``index`` is the waypoint currently being approached. Once the last
    waypoint is reached the node hovers there.
    """

    waypoints: Tuple[Vec3, ...]
    speed_mps: float
    index: int = 0

    def __post_init__(self):
        if not self.waypoints:
            raise GeometryError("waypoint path needs at least one waypoint")
        if self.speed_mps <= 0:
            raise GeometryError("waypoint speed must be positive")


TrajectoryModel = Union[ConstantVelocity, WaypointPath]


@dataclass(frozen=True)
class UavNode:
    """
    A node in the ground-truth world.

    Sybil phantoms have no body of their own: their position always equals
    their malicious host's.
    """

    node_id: int
    role: Role
    position: Vec3
    velocity: Vec3 = field(default_factory=Vec3.zero)
    wing_type: WingType = WingType.ROTARY
    rotor_count: int = 4
    host_id: Optional[int] = None
    trajectory: TrajectoryModel = field(default_factory=ConstantVelocity)

    def __post_init__(self):
        if self.rotor_count < 0:
            raise GeometryError(f"node {self.node_id}: rotor_count must be >= 0")
        if self.role == Role.SYBIL_PHANTOM and self.host_id is None:
            raise GeometryError(f"phantom {self.node_id} has no host")
        if self.role != Role.SYBIL_PHANTOM and self.host_id is not None:
            raise GeometryError(f"node {self.node_id}: only phantoms have a host")

    @property
    def is_physical(self) -> bool:
        return self.role != Role.SYBIL_PHANTOM


@dataclass(frozen=True)
class PolarTruth:
    """Relative geometry of a target seen from an observer, in world-aligned axes."""

    range: float
    azimuth: float
    elevation: float
    radial_velocity: float

    def to_cartesian(self) -> Vec3:
        """Offset of the target from the observer."""
        horizontal = self.range * math.cos(self.elevation)
        return Vec3(
            horizontal * math.cos(self.azimuth),
            horizontal * math.sin(self.azimuth),
            self.range * math.sin(self.elevation),
        )


@dataclass(frozen=True)
class WorldState:
    """Immutable snapshot of every node at one epoch."""

    epoch: int
    dt_s: float
    nodes: Tuple[UavNode, ...]

    def __post_init__(self):
        ids = [node.node_id for node in self.nodes]
        if len(ids) != len(set(ids)):
            raise GeometryError("node ids must be unique")
        by_id = {node.node_id: node for node in self.nodes}
        for node in self.nodes:
            if node.role == Role.SYBIL_PHANTOM:
                host = by_id.get(node.host_id)
                if host is None or host.role != Role.MALICIOUS:
                    raise GeometryError(
                        f"phantom {node.node_id} must reference a malicious host"
                    )

    @property
    def time_s(self) -> float:
        return self.epoch * self.dt_s

    def node(self, node_id: int) -> UavNode:
        for candidate in self.nodes:
            if candidate.node_id == node_id:
                return candidate
        raise GeometryError(f"unknown node_id {node_id}")

    def node_ids(self, role: Optional[Role] = None) -> Tuple[int, ...]:
        return tuple(
            node.node_id for node in self.nodes if role is None or node.role == role
        )

    def with_node(self, updated: UavNode) -> "WorldState":
        nodes = tuple(updated if n.node_id == updated.node_id else n for n in self.nodes)
        return replace(self, nodes=nodes)


def initial_world(nodes: Sequence[UavNode], dt_s: float = DEFAULT_DT_S) -> WorldState:
    """
    Build the epoch-0 world, snapping phantoms onto their hosts.

    Args:
        nodes: All nodes, phantoms included
        dt_s: Fixed simulation timestep

    Returns:
        World snapshot at epoch 0
    """
    world = WorldState(epoch=0, dt_s=dt_s, nodes=tuple(nodes))
    return _colocate_phantoms(world)


def _advance(node: UavNode, dt: float) -> UavNode:
    trajectory = node.trajectory
    if isinstance(trajectory, ConstantVelocity):
        return replace(node, position=node.position + node.velocity.scale(dt))

    position = node.position
    velocity = Vec3.zero()
    index = trajectory.index
    budget = trajectory.speed_mps * dt
    while index < len(trajectory.waypoints) and budget > 0:
        target = trajectory.waypoints[index]
        gap = target - position
        distance = gap.norm()
        if distance <= budget:
            position = target
            budget -= distance
            index += 1
            if distance > 0:
                velocity = gap.scale(trajectory.speed_mps / distance)
        else:
            direction = gap.scale(1.0 / distance)
            position = position + direction.scale(budget)
            velocity = direction.scale(trajectory.speed_mps)
            budget = 0.0
    if index >= len(trajectory.waypoints):
        velocity = Vec3.zero()
    return replace(
        node,
        position=position,
        velocity=velocity,
        trajectory=replace(trajectory, index=index),
    )


def _colocate_phantoms(world: WorldState) -> WorldState:
    by_id = {node.node_id: node for node in world.nodes}
    nodes = []
    for node in world.nodes:
        if node.role == Role.SYBIL_PHANTOM:
            host = by_id[node.host_id]
            node = replace(node, position=host.position, velocity=host.velocity)
        nodes.append(node)
    return replace(world, nodes=tuple(nodes))


def step(world: WorldState, dt: float) -> WorldState:
    """
    Advance the world by one fixed timestep.

    Args:
        world: Current snapshot
        dt: Timestep in seconds (must be positive)

    Returns:
        The next snapshot; phantoms sit on their hosts
    """
    if dt <= 0:
        raise GeometryError("dt must be positive")
    nodes = tuple(
        _advance(node, dt) if node.is_physical else node for node in world.nodes
    )
    advanced = WorldState(epoch=world.epoch + 1, dt_s=dt, nodes=nodes)
    return _colocate_phantoms(advanced)


def wrap_angle(angle: float) -> float:
    """``angle`` folded into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped <= -math.pi else wrapped


def relative_polar(observer: UavNode, target: UavNode) -> PolarTruth:
    """
    Range, angles and radial velocity of ``target`` as seen from ``observer``.

    Angles use world-aligned axes: azimuth from +x toward +y, elevation above
    the x-y plane. Negative radial velocity means the target is approaching.
    """
    offset = target.position - observer.position
    distance = offset.norm()
    if distance < 1e-12:
        raise GeometryError("degenerate geometry")
    relative_velocity = target.velocity - observer.velocity
    return PolarTruth(
        range=distance,
        azimuth=wrap_angle(math.atan2(offset.y, offset.x)),
        elevation=math.atan2(offset.z, math.hypot(offset.x, offset.y)),
        radial_velocity=offset.dot(relative_velocity) / distance,
    )


def neighbors_within(world: WorldState, node_id: int, radius: float) -> Tuple[int, ...]:
    """
    Ids of every other node whose true position lies within ``radius``.

    Phantoms are reported too; they share their host's position.
    """
    if radius <= 0:
        raise GeometryError("radius must be positive")
    center = world.node(node_id).position
    return tuple(
        sorted(
            node.node_id
            for node in world.nodes
            if node.node_id != node_id and node.position.distance_to(center) <= radius
        )
    )
