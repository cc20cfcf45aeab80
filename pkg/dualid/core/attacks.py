"""
Sybil attacker behavior for DUALID.

Covers the attack taxonomy: direct or relayed through a legitimate forwarder,
all phantoms at once or spawned over time, fabricated or stolen identities.
The attacker can forge every field of its beacons but cannot hide its own
echo, and its phantoms have no echo at all.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dualid.core.auth import WitnessReport
from dualid.core.channels import (
    AdReception,
    Beacon,
    MAX_WITNESS_REPORTS,
    Did,
    RngDomain,
    RngStreams,
    SensorConfig,
    deliver,
    rotor_class_of,
)
from dualid.core.identity import CLAIM_SIGMA_FLOOR, Domain, Pid, wing_type_for
from dualid.core.world import Role, UavNode, Vec3, WorldState
from dualid.errors import AttackError

logger = logging.getLogger(__name__)


class HopMode(str, Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"


class TimeMode(str, Enum):
    SIMULTANEOUS = "simultaneous"
    NON_SIMULTANEOUS = "non_simultaneous"


class IdMode(str, Enum):
    FABRICATED = "fabricated"
    STOLEN = "stolen"


class ClaimMotion(str, Enum):
    FIXED_OFFSET = "fixed_offset"
    INDEPENDENT_WALK = "independent_walk"


class AttackConfig(BaseModel):
    """How the malicious node operates its phantoms."""

    model_config = ConfigDict(extra="forbid")

    hop_mode: HopMode = HopMode.DIRECT
    time_mode: TimeMode = TimeMode.SIMULTANEOUS
    id_mode: IdMode = IdMode.FABRICATED
    n_sybil: int = Field(3, ge=1)
    spawn_interval_s: float = Field(5.0, gt=0, description="Used when non_simultaneous")
    claim_offset_m: float = Field(30.0, ge=0)
    claim_motion: ClaimMotion = ClaimMotion.FIXED_OFFSET
    host_claim_offset_m: float = Field(12.0, ge=0)
    walk_step_m: float = Field(1.0, ge=0)
    forge_witness: bool = False
    host_id: Optional[int] = None
    forwarder_id: Optional[int] = None


@dataclass(frozen=True)
class PhantomPlan:
    """One Sybil identity: the phantom node carrying it, when it appears, where it claims to be."""

    node_id: int
    did: Did
    spawn_time_s: float
    bearing_rad: float
    stolen_from: Optional[int] = None


@dataclass(frozen=True)
class AttackSchedule:
    host_id: int
    phantoms: Tuple[PhantomPlan, ...]
    host_bearing_rad: float
    forwarder_id: Optional[int] = None

    def active(self, time_s: float) -> Tuple[PhantomPlan, ...]:
        return tuple(p for p in self.phantoms if p.spawn_time_s <= time_s + 1e-9)

    def dids(self) -> Tuple[Did, ...]:
        return (Did.for_node(self.host_id),) + tuple(p.did for p in self.phantoms)


@dataclass(frozen=True)
class ClaimState:
    """What a phantom claimed last round."""

    position: Optional[Vec3] = None
    time_s: Optional[float] = None
    walk: Optional[Vec3] = None


def _horizontal_offset(bearing: float, magnitude: float) -> Vec3:
    return Vec3(magnitude * math.cos(bearing), magnitude * math.sin(bearing), 0.0)


def _stealable(world: WorldState, host: UavNode, comm_range_m: float) -> List[int]:
    neighborhood = [host] + [
        n
        for n in world.nodes
        if n.is_physical
        and n.node_id != host.node_id
        and n.position.distance_to(host.position) <= comm_range_m
    ]
    return sorted(
        n.node_id
        for n in world.nodes
        if n.role == Role.LEGITIMATE
        and all(n.position.distance_to(m.position) > comm_range_m for m in neighborhood)
    )


def _pick_forwarder(
    cfg: AttackConfig, world: WorldState, host: UavNode, sensors: SensorConfig
) -> int:
    def reachable(node: UavNode) -> bool:
        return node.position.distance_to(host.position) <= sensors.comm_range_m

    if cfg.forwarder_id is not None:
        node = world.node(cfg.forwarder_id)
        if node.role != Role.LEGITIMATE or not reachable(node):
            raise AttackError("no forwarder in range")
        return node.node_id
    candidates = [
        n
        for n in world.nodes
        if n.role == Role.LEGITIMATE
        and reachable(n)
        and n.position.distance_to(host.position) > sensors.sense_range_m
    ]
    if not candidates:
        raise AttackError("no forwarder in range")
    return min(candidates, key=lambda n: (n.position.distance_to(host.position), n.node_id)).node_id


def plan_attack(
    cfg: AttackConfig, world: WorldState, sensors: SensorConfig, rngs: RngStreams
) -> AttackSchedule:
    """
    Plan phantom identities, spawn times and the relay path.

    Args:
        cfg: Attack parameters
        world: Initial world; must hold the malicious host and its phantoms
        sensors: Radio parameters (comm range decides stealable identities)
        rngs: Seeded random streams

    Returns:
        The attack schedule
    """
    hosts = world.node_ids(Role.MALICIOUS)
    if not hosts:
        raise AttackError("no malicious node in the world")
    host_id = cfg.host_id if cfg.host_id is not None else hosts[0]
    host = world.node(host_id)
    if host.role != Role.MALICIOUS:
        raise AttackError(f"node {host_id} is not malicious")

    phantom_ids = sorted(
        n.node_id for n in world.nodes if n.role == Role.SYBIL_PHANTOM and n.host_id == host_id
    )
    if len(phantom_ids) != cfg.n_sybil:
        raise AttackError(
            f"attack needs {cfg.n_sybil} phantoms on host {host_id}, world has {len(phantom_ids)}"
        )

    rng = rngs.get(host_id, RngDomain.PHANTOM)
    phase, host_bearing = rng.uniform(0.0, 2.0 * math.pi, 2)

    victims: List[int] = []
    if cfg.id_mode == IdMode.STOLEN:
        victims = _stealable(world, host, sensors.comm_range_m)
        if not victims:
            raise AttackError("no identity to steal")
        if len(victims) < cfg.n_sybil:
            logger.warning(
                "only %d identities to steal for %d phantoms; fabricating the rest",
                len(victims),
                cfg.n_sybil,
            )

    phantoms = []
    for k, node_id in enumerate(phantom_ids):
        spawn = 0.0 if cfg.time_mode == TimeMode.SIMULTANEOUS else k * cfg.spawn_interval_s
        stolen_from = victims[k] if k < len(victims) else None
        did = Did.for_node(stolen_from) if stolen_from is not None else Did.fabricated(host_id, k + 1)
        phantoms.append(
            PhantomPlan(
                node_id=node_id,
                did=did,
                spawn_time_s=spawn,
                bearing_rad=float(phase + 2.0 * math.pi * k / cfg.n_sybil),
                stolen_from=stolen_from,
            )
        )

    forwarder = None
    if cfg.hop_mode == HopMode.INDIRECT:
        forwarder = _pick_forwarder(cfg, world, host, sensors)

    schedule = AttackSchedule(
        host_id=host_id,
        phantoms=tuple(phantoms),
        host_bearing_rad=float(host_bearing),
        forwarder_id=forwarder,
    )
    logger.info(
        "attack planned: host %d, %d phantoms, %s/%s/%s",
        host_id,
        len(phantoms),
        cfg.hop_mode.value,
        cfg.time_mode.value,
        cfg.id_mode.value,
    )
    return schedule


def sybil_claims(
    phantom: PhantomPlan,
    host: UavNode,
    cfg: AttackConfig,
    time_s: float,
    rng: np.random.Generator,
    state: ClaimState = ClaimState(),
) -> Tuple[Vec3, Vec3, ClaimState]:
    """
    Claimed position and velocity of one phantom for this round.

    Fixed-offset phantoms shadow the host at a constant bearing; walking
    phantoms drift on their own. The claimed velocity is the finite
    difference of consecutive claims, or the host's velocity on the first.

    Returns:
        Claimed position, claimed velocity and the updated claim state
    """
    if time_s + 1e-9 < phantom.spawn_time_s:
        raise AttackError(f"phantom {phantom.node_id} is not active yet")
    offset = _horizontal_offset(phantom.bearing_rad, cfg.claim_offset_m)
    walk = state.walk
    if cfg.claim_motion == ClaimMotion.FIXED_OFFSET:
        position = host.position + offset
    else:
        if walk is None:
            walk = host.position + offset
        else:
            walk = walk + Vec3.from_array(rng.normal(0.0, 1.0, 3) * cfg.walk_step_m)
        position = walk

    if state.position is None or state.time_s is None or time_s <= state.time_s:
        velocity = host.velocity
    else:
        velocity = (position - state.position).scale(1.0 / (time_s - state.time_s))
    return position, velocity, ClaimState(position=position, time_s=time_s, walk=walk)


@dataclass
class AttackRuntime:
    """Forges the malicious host's beacons round after round."""

    cfg: AttackConfig
    schedule: AttackSchedule
    sensors: SensorConfig
    rngs: RngStreams
    states: Dict[int, ClaimState] = field(default_factory=dict)
    victims: Dict[int, UavNode] = field(default_factory=dict)

    @classmethod
    def start(
        cls, cfg: AttackConfig, world: WorldState, sensors: SensorConfig, rngs: RngStreams
    ) -> "AttackRuntime":
        """Plan the attack on the initial world and remember stolen airframes."""
        schedule = plan_attack(cfg, world, sensors, rngs)
        victims = {
            p.stolen_from: world.node(p.stolen_from)
            for p in schedule.phantoms
            if p.stolen_from is not None
        }
        return cls(cfg=cfg, schedule=schedule, sensors=sensors, rngs=rngs, victims=victims)

    def _forged_reports(self, host: UavNode) -> Tuple[WitnessReport, ...]:
        host_did = Did.for_node(host.node_id)
        rotor = rotor_class_of(host.rotor_count)
        reports = []
        sigma = max(self.sensors.sigma_r_m, CLAIM_SIGMA_FLOOR)
        for plan in self.schedule.phantoms:
            state = self.states.get(plan.node_id)
            if state is None or state.position is None or state.time_s is None:
                continue
            measured = Pid(
                domain=Domain.VD,
                position=state.position,
                speed=0.0,
                heading=0.0,
                wing_type=wing_type_for(rotor),
                rotor_class=rotor,
                sigma_position=sigma,
                sigma_speed=CLAIM_SIGMA_FLOOR,
                sigma_heading=math.pi,
                time_s=state.time_s,
            )
            reports.append(WitnessReport(host_did, plan.did, measured, state.time_s))
        return tuple(reports)

    def forge(
        self,
        world: WorldState,
        host_id: int,
        witness_reports: Tuple[WitnessReport, ...],
    ) -> List[Beacon]:
        host = world.node(host_id)
        time_s = world.time_s
        host_did = Did.for_node(host_id)
        noise = self.rngs.get(host_id, RngDomain.AD).normal(0.0, 1.0, 3) * self.sensors.sigma_gnss_m
        disguise = _horizontal_offset(self.schedule.host_bearing_rad, self.cfg.host_claim_offset_m)
        reports = witness_reports
        if self.cfg.forge_witness:
            reports = reports + self._forged_reports(host)

        beacons = [
            Beacon(
                sender_did=host_did,
                claimed_position=host.position + disguise + Vec3.from_array(noise),
                claimed_velocity=host.velocity,
                claimed_wing_type=host.wing_type,
                claimed_rotor_count=host.rotor_count,
                witness_reports=reports[-MAX_WITNESS_REPORTS:],
                emit_time_s=time_s,
                true_origin=host_id,
                transmitter=host_id,
            )
        ]
        for plan in self.schedule.active(time_s):
            rng = self.rngs.get(plan.node_id, RngDomain.PHANTOM)
            position, velocity, self.states[plan.node_id] = sybil_claims(
                plan, host, self.cfg, time_s, rng, self.states.get(plan.node_id, ClaimState())
            )
            airframe = host
            if plan.stolen_from is not None:
                airframe = self.victims.get(plan.stolen_from, host)
            beacons.append(
                Beacon(
                    sender_did=plan.did,
                    claimed_position=position,
                    claimed_velocity=velocity,
                    claimed_wing_type=airframe.wing_type,
                    claimed_rotor_count=airframe.rotor_count,
                    witness_reports=(),
                    emit_time_s=time_s,
                    true_origin=plan.node_id,
                    transmitter=host_id,
                )
            )
        return beacons


def relay_indirect(
    receptions: Dict[int, List[AdReception]],
    world: WorldState,
    schedule: Optional[AttackSchedule],
    sensors: SensorConfig,
) -> Dict[int, List[AdReception]]:
    """
    Route the attacker's beacons through its forwarder.

    In direct mode the receptions pass through unchanged. In indirect mode
    only the forwarder hears the attacker; it stores the beacons and
    re-broadcasts them in its next beacon slot, one more hop later.

    Args:
        receptions: Direct deliveries of this round, by receiver
        world: Current world
        schedule: Attack schedule, or None when there is no attack
        sensors: Radio parameters

    Returns:
        Deliveries by receiver, relayed copies included
    """
    if schedule is None or schedule.forwarder_id is None:
        return receptions
    host_id, forwarder_id = schedule.host_id, schedule.forwarder_id

    routed: Dict[int, List[AdReception]] = {}
    relayed: List[Beacon] = []
    for receiver, batch in receptions.items():
        for reception in batch:
            if reception.beacon.transmitter != host_id:
                routed.setdefault(receiver, []).append(reception)
            elif receiver == forwarder_id:
                routed.setdefault(receiver, []).append(reception)
                relayed.append(replace(reception.beacon, transmitter=forwarder_id))

    hop_s = sensors.hop_latency_ms / 1000.0
    for receiver, batch in deliver(world, relayed, sensors).items():
        if receiver == host_id:
            continue
        for reception in batch:
            routed.setdefault(receiver, []).append(
                replace(
                    reception,
                    receive_time_s=reception.beacon.emit_time_s + 2 * hop_s + sensors.t_ad_s,
                    hops=2,
                )
            )
    return routed


def find_did_collisions(batch: List[AdReception]) -> List[Did]:
    """Dids heard from more than one true origin in one receiver's batch."""
    origins: Dict[Did, set] = {}
    for reception in batch:
        origins.setdefault(reception.beacon.sender_did, set()).add(reception.beacon.true_origin)
    return sorted(did for did, nodes in origins.items() if len(nodes) > 1)
