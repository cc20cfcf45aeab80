"""
Physical identity production for DUALID.

A physical identity (PID) is the feature vector a node can attribute to a
neighbor: position, speed, heading, wing type and rotor class. PIDs come
either from what a neighbor claims over the air (AD) or from what the node's
own tracker estimates (VD). This module builds both kinds, weighs features by
how rarely they are shared across the neighborhood, and scores PID pairs.
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Optional, Sequence, Tuple

import numpy as np

from dualid.core.channels import AdReception, Did, RotorClass, SensorConfig, rotor_class_of
from dualid.core.tracking import DEFAULT_Q, Track, estimate_at
from dualid.core.world import Vec3, WingType, wrap_angle
from dualid.errors import IdentityError

FEATURES: Tuple[str, ...] = ("position", "speed", "heading", "wing_type", "rotor_class")
CONTINUOUS_FEATURES: Tuple[str, ...] = FEATURES[:3]
CATEGORICAL_FEATURES: Tuple[str, ...] = FEATURES[3:]

WEIGHT_FLOOR = 0.01
INDISTINGUISHABLE_SIGMAS = 2.0
KAPPA_ROTOR = 0.2
KAPPA_WING = 0.3
CLAIM_SIGMA_FLOOR = 1e-3
MIN_HEADING_SPEED = 0.1

_FIXED_WING_ROTORS = (RotorClass.NONE, RotorClass.SINGLE)


class Domain(str, Enum):
    AD = "ad"
    VD = "vd"


@dataclass(frozen=True)
class Pid:
    """
    Domain-tagged physical identity.

    ``did`` is set for AD PIDs and ``track_id`` for VD PIDs. Position
    uncertainty is a per-axis standard deviation; VD PIDs also keep the
    track's full 3x3 position covariance.
    """

    domain: Domain
    position: Vec3
    speed: float
    heading: float
    wing_type: WingType
    rotor_class: RotorClass
    sigma_position: float
    sigma_speed: float
    sigma_heading: float
    time_s: float
    did: Optional[Did] = None
    track_id: Optional[int] = None
    position_covariance: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if min(self.sigma_position, self.sigma_speed, self.sigma_heading) <= 0:
            raise IdentityError("continuous feature sigma must be positive")

    def sigma(self, feature: str) -> float:
        return {
            "position": self.sigma_position,
            "speed": self.sigma_speed,
            "heading": self.sigma_heading,
        }[feature]

    def covariance(self) -> np.ndarray:
        """3x3 position covariance; isotropic when only the scalar sigma is known."""
        if self.position_covariance is not None:
            return self.position_covariance
        return self.sigma_position**2 * np.eye(3)


@dataclass(frozen=True)
class FeatureWeights:
    """Non-negative feature weights in ``FEATURES`` order, summing to one."""

    w: Tuple[float, ...]

    def __post_init__(self):
        if len(self.w) != len(FEATURES):
            raise IdentityError("schema mismatch")
        if min(self.w) < 0 or abs(sum(self.w) - 1.0) > 1e-9:
            raise IdentityError("weights must be non-negative and sum to 1")

    @classmethod
    def uniform(cls) -> "FeatureWeights":
        return cls(tuple(1.0 / len(FEATURES) for _ in FEATURES))

    def of(self, feature: str) -> float:
        return self.w[FEATURES.index(feature)]


def _heading_sigma(sigma_speed: float, horizontal_speed: float) -> float:
    return min(math.pi, sigma_speed / max(horizontal_speed, MIN_HEADING_SPEED))


def wing_type_for(rotor_class: RotorClass) -> WingType:
    """Airframe category implied by a sensed rotor class."""
    return WingType.FIXED if rotor_class in _FIXED_WING_ROTORS else WingType.ROTARY


def extract_pid_ad(reception: AdReception, config: Optional[SensorConfig] = None) -> Pid:
    """
    PID claimed by a received beacon.

    Args:
        reception: Heard beacon
        config: Sensor parameters supplying the claim uncertainties

    Returns:
        AD-domain PID tagged with the beacon's Did
    """
    config = config or SensorConfig()
    beacon = reception.beacon
    velocity = beacon.claimed_velocity
    horizontal = math.hypot(velocity.x, velocity.y)
    sigma_speed = max(config.sigma_claim_velocity_mps, CLAIM_SIGMA_FLOOR)
    return Pid(
        domain=Domain.AD,
        position=beacon.claimed_position,
        speed=velocity.norm(),
        heading=math.atan2(velocity.y, velocity.x),
        wing_type=beacon.claimed_wing_type,
        rotor_class=rotor_class_of(beacon.claimed_rotor_count),
        sigma_position=max(config.sigma_gnss_m, CLAIM_SIGMA_FLOOR),
        sigma_speed=sigma_speed,
        sigma_heading=_heading_sigma(sigma_speed, horizontal),
        time_s=beacon.emit_time_s,
        did=beacon.sender_did,
    )


def majority_rotor_class(history: Sequence[RotorClass]) -> RotorClass:
    if not history:
        return RotorClass.OTHER
    return Counter(history).most_common(1)[0][0]


def extract_pid_vd(
    track: Track, time_s: Optional[float] = None, q: float = DEFAULT_Q
) -> Pid:
    """
    PID estimated by a confirmed track, optionally aligned to ``time_s``.

    Args:
        track: Confirmed (or coasting) track
        time_s: Time to estimate at; defaults to the track's own time
        q: Process-noise density used when propagating

    Returns:
        VD-domain PID tagged with the track id
    """
    if not track.is_confirmed:
        raise IdentityError("unconfirmed track")
    if time_s is None:
        state, covariance = track.state, track.covariance
        time_s = track.time_s
    else:
        state, covariance = estimate_at(track, time_s, q)

    velocity = state[3:]
    horizontal = float(math.hypot(velocity[0], velocity[1]))
    sigma_position = math.sqrt(max(np.trace(covariance[:3, :3]) / 3.0, 0.0))
    sigma_speed = math.sqrt(max(np.trace(covariance[3:, 3:]) / 3.0, 0.0))
    rotor = majority_rotor_class(track.rotor_history)
    return Pid(
        domain=Domain.VD,
        position=Vec3.from_array(state[:3]),
        speed=float(np.linalg.norm(velocity)),
        heading=math.atan2(velocity[1], velocity[0]),
        wing_type=wing_type_for(rotor),
        rotor_class=rotor,
        sigma_position=max(sigma_position, CLAIM_SIGMA_FLOOR),
        sigma_speed=max(sigma_speed, CLAIM_SIGMA_FLOOR),
        sigma_heading=_heading_sigma(max(sigma_speed, CLAIM_SIGMA_FLOOR), horizontal),
        time_s=time_s,
        track_id=track.track_id,
        position_covariance=np.array(covariance[:3, :3], dtype=float),
    )


def feature_delta(a: Pid, b: Pid, feature: str) -> float:
    """Absolute difference of one continuous feature."""
    if feature == "position":
        return a.position.distance_to(b.position)
    if feature == "speed":
        return abs(a.speed - b.speed)
    if feature == "heading":
        return abs(wrap_angle(a.heading - b.heading))
    raise IdentityError(f"not a continuous feature: {feature}")


def combined_sigma(a: Pid, b: Pid, feature: str) -> float:
    return math.hypot(a.sigma(feature), b.sigma(feature))


def _indistinguishable(a: Pid, b: Pid, feature: str) -> bool:
    if feature in CATEGORICAL_FEATURES:
        return getattr(a, feature) == getattr(b, feature)
    return feature_delta(a, b, feature) <= INDISTINGUISHABLE_SIGMAS * combined_sigma(a, b, feature)


def feature_weights(neighbor_pids: Sequence[Pid]) -> FeatureWeights:
    """
    Weigh each feature by how rarely neighbors share it.

    A feature's prevalence is the fraction of PID pairs it cannot tell
    apart; its weight is proportional to one minus that fraction plus a
    small floor.

    Args:
        neighbor_pids: PIDs of the current neighborhood (either domain)

    Returns:
        Normalized weights in ``FEATURES`` order
    """
    if len(neighbor_pids) < 2:
        raise IdentityError("insufficient population")
    pairs = list(combinations(neighbor_pids, 2))
    raw = []
    for feature in FEATURES:
        shared = sum(1 for a, b in pairs if _indistinguishable(a, b, feature))
        raw.append((1.0 - shared / len(pairs)) + WEIGHT_FLOOR)
    total = sum(raw)
    return FeatureWeights(tuple(r / total for r in raw))


def similarity(
    a: Pid,
    b: Pid,
    w: FeatureWeights,
    kappa_rotor: float = KAPPA_ROTOR,
    kappa_wing: float = KAPPA_WING,
) -> float:
    """
    Similarity of two PIDs in [0, 1].

    Gaussian kernel over weighted, uncertainty-normalized continuous
    differences, multiplied by a penalty for each categorical mismatch.
    """
    if not isinstance(a, Pid) or not isinstance(b, Pid) or len(w.w) != len(FEATURES):
        raise IdentityError("schema mismatch")
    exponent = 0.0
    for feature in CONTINUOUS_FEATURES:
        ratio = feature_delta(a, b, feature) / combined_sigma(a, b, feature)
        exponent += w.of(feature) * ratio * ratio
    score = math.exp(-0.5 * exponent)
    if a.wing_type != b.wing_type:
        score *= kappa_wing
    if a.rotor_class != b.rotor_class:
        score *= kappa_rotor
    return score
