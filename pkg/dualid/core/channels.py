"""
Auditory- and visual-domain channels for DUALID.

The auditory domain (AD) is what a node hears: beacons carrying a digital
identity plus self-claimed physical state. The visual domain (VD) is what a
node sees: noisy echo measurements of physically present neighbors. Sybil
phantoms exist only in the first.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import TYPE_CHECKING, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dualid.core.world import Role, Vec3, WingType, WorldState, relative_polar, wrap_angle
from dualid.errors import ChannelError

if TYPE_CHECKING:
    from dualid.core.auth import WitnessReport

logger = logging.getLogger(__name__)

MAX_WITNESS_REPORTS = 8
RANGE_VARIANCE_FLOOR = 1e-6
ANGLE_VARIANCE_FLOOR = 1e-10
SPEED_VARIANCE_FLOOR = 1e-8

_NODE_DID_TAG = 0xA5
_FABRICATED_DID_TAG = 0x5B


@dataclass(frozen=True, order=True)
class Did:
    """Digital identity: an opaque 64-bit address."""

    address: int

    def __post_init__(self):
        if not 0 <= self.address < 2**64:
            raise ChannelError(f"did address out of 64-bit range: {self.address}")

    @classmethod
    def for_node(cls, node_id: int) -> "Did":
        """The identity a physical node is provisioned with."""
        return cls((_NODE_DID_TAG << 56) | node_id)

    @classmethod
    def fabricated(cls, host_id: int, ordinal: int) -> "Did":
        """A made-up identity that no physical node owns."""
        return cls((_FABRICATED_DID_TAG << 56) | (host_id << 16) | ordinal)

    def __str__(self) -> str:
        return f"{self.address:016x}"


class RotorClass(str, Enum):
    """Rotor-count bins used as the categorical airframe feature."""

    NONE = "none"
    SINGLE = "single"
    TWIN = "twin"
    TRI = "tri"
    QUAD = "quad"
    HEX = "hex"
    OCTO = "octo"
    OTHER = "other"


_ROTOR_BINS = {
    0: RotorClass.NONE,
    1: RotorClass.SINGLE,
    2: RotorClass.TWIN,
    3: RotorClass.TRI,
    4: RotorClass.QUAD,
    6: RotorClass.HEX,
    8: RotorClass.OCTO,
}
ROTOR_CLASSES: Tuple[RotorClass, ...] = tuple(RotorClass)


def rotor_class_of(rotor_count: int) -> RotorClass:
    return _ROTOR_BINS.get(rotor_count, RotorClass.OTHER)


@dataclass(frozen=True)
class Beacon:
    """
    One auditory-domain message.

    ``true_origin`` is the node whose identity the beacon stands for (a
    phantom's own node id for Sybil beacons) and ``transmitter`` the radio
    that actually put it on air. Both are ground truth used for delivery and
    scoring; receivers never read them.
    """

    sender_did: Did
    claimed_position: Vec3
    claimed_velocity: Vec3
    claimed_wing_type: WingType
    claimed_rotor_count: int
    witness_reports: Tuple["WitnessReport", ...]
    emit_time_s: float
    true_origin: int
    transmitter: int


@dataclass(frozen=True)
class AdReception:
    """A beacon as heard by one receiver."""

    beacon: Beacon
    receiver: int
    receive_time_s: float
    hops: int = 1

    def __post_init__(self):
        if self.receive_time_s < self.beacon.emit_time_s:
            raise ChannelError("reception precedes emission")


@dataclass(frozen=True)
class VdMeasurement:
    """One echo observation. ``true_source`` is None for clutter."""

    observer: int
    range_m: float
    azimuth_rad: float
    elevation_rad: float
    radial_velocity_mps: float
    rotor_class: RotorClass
    variances: Tuple[float, float, float, float]
    time_s: float
    true_source: Optional[int]


class SensorConfig(BaseModel):
    """Radio and sensing parameters shared by every node."""

    model_config = ConfigDict(extra="forbid")

    comm_range_m: float = Field(500.0, gt=0)
    sense_range_m: float = Field(300.0, gt=0)
    t_ad_s: float = Field(0.2, gt=0, description="Beacon period")
    t_vd_s: float = Field(0.05, gt=0, description="Sensing period")
    sigma_gnss_m: float = Field(2.0, ge=0)
    sigma_r_m: float = Field(0.5, ge=0)
    sigma_angle_rad: float = Field(0.017, ge=0)
    sigma_v_mps: float = Field(0.1, ge=0)
    sigma_claim_velocity_mps: float = Field(
        0.5, ge=0, description="Uncertainty receivers assign to claimed velocities"
    )
    p_detect: float = Field(0.95, gt=0, le=1)
    rotor_confusion_prob: float = Field(0.05, ge=0, lt=1)
    hop_latency_ms: float = Field(2.3, ge=0)
    clutter_rate: float = Field(0.0, ge=0, description="Expected false echoes per scan")

    @model_validator(mode="after")
    def _vd_refreshes_faster(self) -> "SensorConfig":
        if self.t_vd_s > self.t_ad_s:
            raise ValueError("t_vd_s must not exceed t_ad_s")
        return self


class RngDomain(IntEnum):
    AD = 1
    VD = 2
    PHANTOM = 3
    LATENCY = 4
    CLUTTER = 5


class RngStreams:
    """
    Seeded random streams keyed by (node, domain).

    Each stream is an independent ``numpy`` generator seeded from
    ``[seed, node, domain]``, so the draws one node makes never shift
    another's sequence.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ChannelError("seed must be non-negative")
        self.seed = seed
        self._streams: Dict[Tuple[int, int], np.random.Generator] = {}

    def get(self, node_id: int, domain: RngDomain) -> np.random.Generator:
        key = (node_id, int(domain))
        stream = self._streams.get(key)
        if stream is None:
            stream = np.random.default_rng([self.seed, node_id, int(domain)])
            self._streams[key] = stream
        return stream


def epoch_period(period_s: float, dt_s: float) -> int:
    """Number of simulation epochs per channel period (at least one)."""
    return max(1, int(round(period_s / dt_s)))


def is_ad_epoch(epoch: int, dt_s: float, config: SensorConfig) -> bool:
    return epoch % epoch_period(config.t_ad_s, dt_s) == 0


def is_vd_epoch(epoch: int, dt_s: float, config: SensorConfig) -> bool:
    return epoch % epoch_period(config.t_vd_s, dt_s) == 0


class ClaimSource(Protocol):
    """Anything able to forge the beacons a malicious node puts on air."""

    def forge(
        self,
        world: WorldState,
        host_id: int,
        witness_reports: Tuple["WitnessReport", ...],
    ) -> List[Beacon]:
        ...


def emit_beacons(
    world: WorldState,
    node_id: int,
    config: SensorConfig,
    rngs: RngStreams,
    attack: Optional[ClaimSource] = None,
    witness_reports: Sequence["WitnessReport"] = (),
) -> List[Beacon]:
    """
    Beacons a node transmits in the current AD round.

    Args:
        world: Current world snapshot
        node_id: Transmitting node
        config: Sensor parameters
        rngs: Seeded random streams
        attack: Claim forger used when the node is malicious
        witness_reports: Most recent reports to piggyback (capped)

    Returns:
        One beacon for a legitimate node; one per operated identity for a
        malicious node with an active attack
    """
    node = world.node(node_id)
    if node.role == Role.SYBIL_PHANTOM:
        raise ChannelError("phantoms do not transmit")
    reports = tuple(witness_reports)[-MAX_WITNESS_REPORTS:]

    if node.role == Role.MALICIOUS and attack is not None:
        return attack.forge(world, node_id, reports)

    noise = rngs.get(node_id, RngDomain.AD).normal(0.0, 1.0, 3) * config.sigma_gnss_m
    return [
        Beacon(
            sender_did=Did.for_node(node_id),
            claimed_position=node.position + Vec3.from_array(noise),
            claimed_velocity=node.velocity,
            claimed_wing_type=node.wing_type,
            claimed_rotor_count=node.rotor_count,
            witness_reports=reports,
            emit_time_s=world.time_s,
            true_origin=node_id,
            transmitter=node_id,
        )
    ]


def deliver(
    world: WorldState, beacons: Sequence[Beacon], config: SensorConfig
) -> Dict[int, List[AdReception]]:
    """
    Deliver beacons to every physical node in radio range of the transmitter.

    Returns:
        Receptions keyed by receiver id, in beacon order
    """
    latency_s = config.hop_latency_ms / 1000.0
    receivers = [node for node in world.nodes if node.is_physical]
    delivered: Dict[int, List[AdReception]] = {}
    for beacon in beacons:
        origin = world.node(beacon.transmitter).position
        for receiver in receivers:
            if receiver.node_id == beacon.transmitter:
                continue
            if receiver.position.distance_to(origin) > config.comm_range_m:
                continue
            delivered.setdefault(receiver.node_id, []).append(
                AdReception(
                    beacon=beacon,
                    receiver=receiver.node_id,
                    receive_time_s=beacon.emit_time_s + latency_s,
                )
            )
    return delivered


def measurement_variances(config: SensorConfig) -> Tuple[float, float, float, float]:
    """Reported (range, azimuth, elevation, radial velocity) variances."""
    angle = max(config.sigma_angle_rad**2, ANGLE_VARIANCE_FLOOR)
    return (
        max(config.sigma_r_m**2, RANGE_VARIANCE_FLOOR),
        angle,
        angle,
        max(config.sigma_v_mps**2, SPEED_VARIANCE_FLOOR),
    )


def sense(
    world: WorldState, observer_id: int, config: SensorConfig, rngs: RngStreams
) -> List[VdMeasurement]:
    """
    Echo measurements taken by one observer in the current VD round.

    Every physical neighbor inside sensing range consumes the same number of
    draws whether or not it is detected, so detection outcomes never shift
    later noise.
    """
    observer = world.node(observer_id)
    rng = rngs.get(observer_id, RngDomain.VD)
    variances = measurement_variances(config)
    measurements: List[VdMeasurement] = []

    for target in sorted(world.nodes, key=lambda n: n.node_id):
        if target.node_id == observer_id or not target.is_physical:
            continue
        if target.position.distance_to(observer.position) > config.sense_range_m:
            continue
        detect_draw, confusion_draw, class_draw = rng.random(3)
        noise = rng.normal(0.0, 1.0, 4)
        if detect_draw >= config.p_detect:
            continue
        truth = relative_polar(observer, target)
        rotor = rotor_class_of(target.rotor_count)
        if confusion_draw < config.rotor_confusion_prob:
            wrong = [c for c in ROTOR_CLASSES if c != rotor]
            rotor = wrong[int(class_draw * len(wrong))]
        measurements.append(
            VdMeasurement(
                observer=observer_id,
                range_m=max(0.0, truth.range + noise[0] * config.sigma_r_m),
                azimuth_rad=wrap_angle(truth.azimuth + noise[1] * config.sigma_angle_rad),
                elevation_rad=float(
                    np.clip(
                        truth.elevation + noise[2] * config.sigma_angle_rad,
                        -math.pi / 2,
                        math.pi / 2,
                    )
                ),
                radial_velocity_mps=truth.radial_velocity + noise[3] * config.sigma_v_mps,
                rotor_class=rotor,
                variances=variances,
                time_s=world.time_s,
                true_source=target.node_id,
            )
        )

    if config.clutter_rate > 0:
        measurements.extend(_clutter(world, observer_id, config, rngs, variances))
    return measurements


def _clutter(
    world: WorldState,
    observer_id: int,
    config: SensorConfig,
    rngs: RngStreams,
    variances: Tuple[float, float, float, float],
) -> List[VdMeasurement]:
    rng = rngs.get(observer_id, RngDomain.CLUTTER)
    count = int(rng.poisson(config.clutter_rate))
    false_echoes = []
    for _ in range(count):
        r, a, e, v, c = rng.random(5)
        false_echoes.append(
            VdMeasurement(
                observer=observer_id,
                range_m=r * config.sense_range_m,
                azimuth_rad=wrap_angle((2.0 * a - 1.0) * math.pi),
                elevation_rad=(e - 0.5) * math.pi,
                radial_velocity_mps=(2.0 * v - 1.0) * 10.0,
                rotor_class=ROTOR_CLASSES[int(c * len(ROTOR_CLASSES))],
                variances=variances,
                time_s=world.time_s,
                true_source=None,
            )
        )
    if false_echoes:
        logger.debug("node %d: %d clutter echoes", observer_id, len(false_echoes))
    return false_echoes
