"""
Visual-domain track management for DUALID.

Echo measurements arrive in polar form; tracks evolve in Cartesian form. This
module converts between the two without bias, runs a constant-velocity
Kalman filter per neighbor, associates measurements to tracks with a gated
greedy nearest-neighbor pass, and manages the track lifecycle so a node keeps
estimating its neighbors between beacons.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dualid.core.channels import Did, RotorClass, VdMeasurement
from dualid.core.world import Vec3, wrap_angle
from dualid.errors import TrackingError

logger = logging.getLogger(__name__)

DEFAULT_Q = 1.0
DEFAULT_SIGMA_V0 = 30.0
UCM_ANGLE_VARIANCE_LIMIT = 0.25
COVARIANCE_JITTER = 1e-9
HISTORY_CAP = 64

_H = np.hstack([np.eye(3), np.zeros((3, 3))])


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    COASTING = "coasting"
    DEAD = "dead"


class GateParams(BaseModel):
    """Association gate and lifecycle thresholds."""

    model_config = ConfigDict(extra="forbid")

    gate_radius_m: float = Field(10.0, gt=0)
    confirm_hits: int = Field(3, gt=0)
    delete_misses: int = Field(5, gt=0)


@dataclass(frozen=True, eq=False)
class CartesianMeasurement:
    """A converted echo: world position with its covariance."""

    position: np.ndarray
    covariance: np.ndarray
    radial_velocity: float
    time_s: float
    rotor_class: Optional[RotorClass] = None
    true_source: Optional[int] = None


@dataclass(frozen=True, eq=False)
class Snapshot:
    time_s: float
    state: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True, eq=False)
class Track:
    """Constant-velocity Kalman track of one physical neighbor."""

    track_id: int
    state: np.ndarray
    covariance: np.ndarray
    time_s: float
    last_update_s: float
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 1
    hit_streak: int = 1
    misses: int = 0
    associated_did: Optional[Did] = None
    rotor_history: Tuple[RotorClass, ...] = ()
    history: Tuple[Snapshot, ...] = ()
    last_source: Optional[int] = None
    radial_velocity: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return self.state[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[3:]

    @property
    def is_confirmed(self) -> bool:
        return self.status in (TrackStatus.CONFIRMED, TrackStatus.COASTING)


@dataclass(frozen=True)
class AssociationResult:
    pairs: Tuple[Tuple[int, int], ...]
    unmatched_tracks: Tuple[int, ...]
    unmatched_measurements: Tuple[int, ...]


@dataclass(frozen=True)
class Prediction:
    """Predicted target state and beam-pointing angles from one observer."""

    position: Vec3
    velocity: Vec3
    range_m: float
    azimuth_rad: float
    elevation_rad: float


def debias_factors(var_az: np.ndarray, var_el: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Multiplicative bias of the noisy azimuth and elevation cosines."""
    return np.exp(-np.asarray(var_az) / 2.0), np.exp(-np.asarray(var_el) / 2.0)


def raw_convert_arrays(r, az, el) -> np.ndarray:
    """Plain spherical-to-Cartesian conversion, one row per measurement."""
    r, az, el = np.asarray(r, float), np.asarray(az, float), np.asarray(el, float)
    cos_el = np.cos(el)
    return np.stack([r * cos_el * np.cos(az), r * cos_el * np.sin(az), r * np.sin(el)], axis=-1)


def ucm_convert_arrays(r, az, el, var_az, var_el) -> np.ndarray:
    """
    Debiased conversion of measured range/angles to Cartesian offsets.

    Args:
        r: Measured ranges
        az: Measured azimuths
        el: Measured elevations
        var_az: Azimuth noise variance (scalar or per measurement)
        var_el: Elevation noise variance (scalar or per measurement)

    Returns:
        Array of shape (n, 3) whose expectation equals the true offsets
    """
    if np.any(np.asarray(var_az) >= UCM_ANGLE_VARIANCE_LIMIT) or np.any(
        np.asarray(var_el) >= UCM_ANGLE_VARIANCE_LIMIT
    ):
        raise TrackingError("angle noise too large for UCM")
    lam_az, lam_el = np.broadcast_arrays(*debias_factors(var_az, var_el))
    horizontal = 1.0 / (lam_az * lam_el)
    scale = np.stack([horizontal, horizontal, 1.0 / lam_el], axis=-1)
    return raw_convert_arrays(r, az, el) * scale


def ucm_convert(m: VdMeasurement, observer_position: Vec3) -> CartesianMeasurement:
    """
    Convert one echo measurement to a world-frame Cartesian measurement.

    Args:
        m: Polar echo measurement
        observer_position: Position of the sensing node

    Returns:
        Debiased position and first-order covariance
    """
    var_r, var_az, var_el, _ = m.variances
    offset = ucm_convert_arrays(m.range_m, m.azimuth_rad, m.elevation_rad, var_az, var_el)
    lam_az, lam_el = (float(x) for x in debias_factors(var_az, var_el))

    r, a, e = m.range_m, m.azimuth_rad, m.elevation_rad
    ca, sa, ce, se = math.cos(a), math.sin(a), math.cos(e), math.sin(e)
    jacobian = np.array(
        [
            [ce * ca, -r * ce * sa, -r * se * ca],
            [ce * sa, r * ce * ca, -r * se * sa],
            [se, 0.0, r * ce],
        ]
    )
    debias = np.diag([1.0 / (lam_az * lam_el), 1.0 / (lam_az * lam_el), 1.0 / lam_el])
    polar_cov = np.diag([var_r, var_az, var_el])
    covariance = debias @ jacobian @ polar_cov @ jacobian.T @ debias
    covariance = 0.5 * (covariance + covariance.T) + COVARIANCE_JITTER * np.eye(3)

    return CartesianMeasurement(
        position=observer_position.as_array() + offset,
        covariance=covariance,
        radial_velocity=m.radial_velocity_mps,
        time_s=m.time_s,
        rotor_class=m.rotor_class,
        true_source=m.true_source,
    )


def transition(dt: float) -> np.ndarray:
    F = np.eye(6)
    F[:3, 3:] = dt * np.eye(3)
    return F


def process_noise(dt: float, q: float) -> np.ndarray:
    """White-acceleration process noise for a constant-velocity model."""
    dt = abs(dt)
    Q = np.zeros((6, 6))
    Q[:3, :3] = (dt**3 / 3.0) * np.eye(3)
    Q[:3, 3:] = (dt**2 / 2.0) * np.eye(3)
    Q[3:, :3] = (dt**2 / 2.0) * np.eye(3)
    Q[3:, 3:] = dt * np.eye(3)
    return q * Q


def _propagate(state: np.ndarray, covariance: np.ndarray, dt: float, q: float):
    F = transition(dt)
    P = F @ covariance @ F.T + process_noise(dt, q)
    return F @ state, 0.5 * (P + P.T)


def kf_predict(
    track: Track, dt: float, q: float = DEFAULT_Q, staleness_s: Optional[float] = None
) -> Track:
    """
    Propagate a track ``dt`` seconds under the constant-velocity model.

    A confirmed track predicted beyond ``staleness_s`` past its last update
    starts coasting.
    """
    if dt < 0:
        raise TrackingError("dt must be non-negative")
    if dt == 0:
        return track
    state, covariance = _propagate(track.state, track.covariance, dt, q)
    status = track.status
    time_s = track.time_s + dt
    if (
        status == TrackStatus.CONFIRMED
        and staleness_s is not None
        and time_s - track.last_update_s > staleness_s
    ):
        status = TrackStatus.COASTING
    return replace(track, state=state, covariance=covariance, time_s=time_s, status=status)


def kf_update(track: Track, z: CartesianMeasurement) -> Track:
    """
    Linear position-only measurement update in Joseph form.

    The track must already be predicted to ``z.time_s``.
    """
    if z.time_s < track.last_update_s:
        raise TrackingError("measurement older than last update")
    R = np.asarray(z.covariance, dtype=float)
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise TrackingError("non-PD measurement covariance")

    P = track.covariance
    S = _H @ P @ _H.T + R
    K = np.linalg.solve(S, _H @ P).T
    innovation = z.position - _H @ track.state
    state = track.state + K @ innovation
    I_KH = np.eye(6) - K @ _H
    covariance = I_KH @ P @ I_KH.T + K @ R @ K.T
    covariance = 0.5 * (covariance + covariance.T)

    history = (track.history + (Snapshot(z.time_s, state, covariance),))[-HISTORY_CAP:]
    rotors = track.rotor_history
    if z.rotor_class is not None:
        rotors = (rotors + (z.rotor_class,))[-HISTORY_CAP:]
    return replace(
        track,
        state=state,
        covariance=covariance,
        time_s=z.time_s,
        last_update_s=z.time_s,
        hits=track.hits + 1,
        hit_streak=track.hit_streak + 1,
        misses=0,
        rotor_history=rotors,
        history=history,
        last_source=z.true_source,
        radial_velocity=z.radial_velocity,
    )


def estimate_at(track: Track, time_s: float, q: float = DEFAULT_Q) -> Tuple[np.ndarray, np.ndarray]:
    """
    Track state and covariance at an arbitrary time.

    Starts from the latest filtered snapshot not after ``time_s`` and
    propagates; used to align claims with estimates taken at other epochs.
    """
    if track.time_s <= time_s or not track.history:
        base = Snapshot(track.time_s, track.state, track.covariance)
    else:
        base = track.history[0]
        for snapshot in track.history:
            if snapshot.time_s <= time_s:
                base = snapshot
    return _propagate(base.state, base.covariance, time_s - base.time_s, q)


def predict_ahead(
    track: Track, k: int, dt: float, observer_position: Vec3, q: float = DEFAULT_Q
) -> Prediction:
    """
    Predict ``k`` steps of ``dt`` ahead without touching the track.

    Args:
        track: Confirmed track
        k: Number of steps, 1 or 2
        dt: Step length in seconds
        observer_position: Position the beam is pointed from

    Returns:
        Predicted kinematics and pointing angles
    """
    if not track.is_confirmed:
        raise TrackingError("unconfirmed track")
    if k not in (1, 2):
        raise TrackingError("prediction horizon must be 1 or 2 steps")
    ahead = track
    for _ in range(k):
        ahead = kf_predict(ahead, dt, q)
    offset = ahead.position - observer_position.as_array()
    distance = float(np.linalg.norm(offset))
    return Prediction(
        position=Vec3.from_array(ahead.position),
        velocity=Vec3.from_array(ahead.velocity),
        range_m=distance,
        azimuth_rad=wrap_angle(math.atan2(offset[1], offset[0])),
        elevation_rad=math.atan2(offset[2], math.hypot(offset[0], offset[1])),
    )


def associate(
    tracks: Sequence[Track], measurements: Sequence[CartesianMeasurement], gate: GateParams
) -> AssociationResult:
    """
    Greedy gated nearest-neighbor association.

    Measurements are taken in input order; each binds to the nearest
    unconsumed track within the gate radius, ties going to the lowest
    track id.

    Returns:
        Pairs of (track_id, measurement index) plus the leftovers
    """
    live = sorted((t for t in tracks if t.status != TrackStatus.DEAD), key=lambda t: t.track_id)
    consumed: Dict[int, bool] = {}
    pairs: List[Tuple[int, int]] = []
    unmatched_measurements: List[int] = []
    for index, z in enumerate(measurements):
        best_id, best_distance = None, math.inf
        for track in live:
            if track.track_id in consumed:
                continue
            distance = float(np.linalg.norm(track.position - z.position))
            if distance <= gate.gate_radius_m and distance < best_distance:
                best_id, best_distance = track.track_id, distance
        if best_id is None:
            unmatched_measurements.append(index)
        else:
            consumed[best_id] = True
            pairs.append((best_id, index))
    unmatched_tracks = tuple(t.track_id for t in live if t.track_id not in consumed)
    return AssociationResult(tuple(pairs), unmatched_tracks, tuple(unmatched_measurements))


def new_track(track_id: int, z: CartesianMeasurement, sigma_v0: float = DEFAULT_SIGMA_V0) -> Track:
    """Tentative track seeded from one measurement, at rest."""
    state = np.concatenate([z.position, np.zeros(3)])
    covariance = np.zeros((6, 6))
    covariance[:3, :3] = z.covariance
    covariance[3:, 3:] = sigma_v0**2 * np.eye(3)
    return Track(
        track_id=track_id,
        state=state,
        covariance=covariance,
        time_s=z.time_s,
        last_update_s=z.time_s,
        rotor_history=(z.rotor_class,) if z.rotor_class is not None else (),
        history=(Snapshot(z.time_s, state, covariance),),
        last_source=z.true_source,
        radial_velocity=z.radial_velocity,
    )


def manage_tracks(
    tracks: Sequence[Track],
    measurements: Sequence[CartesianMeasurement],
    result: AssociationResult,
    gate: GateParams,
    next_track_id: int,
    sigma_v0: float = DEFAULT_SIGMA_V0,
) -> Tuple[List[Track], int]:
    """
    Apply an association result: update, age, confirm, delete and spawn tracks.

    Returns:
        Surviving tracks sorted by id, and the next free track id
    """
    by_id = {t.track_id: t for t in tracks}
    updated: Dict[int, Track] = {}

    for track_id, index in result.pairs:
        track = kf_update(by_id[track_id], measurements[index])
        if track.status == TrackStatus.COASTING:
            track = replace(track, status=TrackStatus.CONFIRMED)
        elif track.status == TrackStatus.TENTATIVE and track.hit_streak >= gate.confirm_hits:
            track = replace(track, status=TrackStatus.CONFIRMED)
            logger.debug("track %d confirmed", track_id)
        updated[track_id] = track

    for track_id in result.unmatched_tracks:
        track = by_id[track_id]
        misses = track.misses + 1
        status = track.status
        if misses >= gate.delete_misses:
            status = TrackStatus.DEAD
        elif status == TrackStatus.CONFIRMED:
            status = TrackStatus.COASTING
        track = replace(track, misses=misses, hit_streak=0, status=status)
        if status == TrackStatus.DEAD:
            logger.debug("track %d deleted after %d misses", track_id, misses)
            continue
        updated[track_id] = track

    for index in result.unmatched_measurements:
        updated[next_track_id] = new_track(next_track_id, measurements[index], sigma_v0)
        logger.debug("track %d born", next_track_id)
        next_track_id += 1

    return [updated[k] for k in sorted(updated)], next_track_id


@dataclass
class Tracker:
    """Track store of one sensing node."""

    gate: GateParams = field(default_factory=GateParams)
    q: float = DEFAULT_Q
    staleness_s: Optional[float] = None
    sigma_v0: float = DEFAULT_SIGMA_V0
    tracks: List[Track] = field(default_factory=list)
    next_track_id: int = 1

    def scan(self, measurements: Sequence[CartesianMeasurement], time_s: float) -> List[Track]:
        """Predict every track to ``time_s`` and fold in one scan of measurements."""
        predicted = [
            kf_predict(t, max(0.0, time_s - t.time_s), self.q, self.staleness_s)
            for t in self.tracks
        ]
        result = associate(predicted, measurements, self.gate)
        self.tracks, self.next_track_id = manage_tracks(
            predicted, measurements, result, self.gate, self.next_track_id, self.sigma_v0
        )
        return self.tracks

    def confirmed(self) -> List[Track]:
        return [t for t in self.tracks if t.is_confirmed]

    def get(self, track_id: int) -> Track:
        for track in self.tracks:
            if track.track_id == track_id:
                return track
        raise TrackingError(f"unknown track {track_id}")

    def bind(self, track_id: int, did: Optional[Did]) -> None:
        """Record the identity a track was last mapped to."""
        self.tracks = [
            replace(t, associated_did=did) if t.track_id == track_id else t for t in self.tracks
        ]
