"""
Application logic built on dual-identity mapping.

Selecting the most endangered neighbor, addressing an emergency alert to it
directly, and fusing claimed with sensed positions for ranging.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np

from dualid.core.channels import Did
from dualid.core.tracking import Track
from dualid.core.world import Vec3, WorldState
from dualid.errors import TrackingError
from dualid.scenarios.config import LatencyConstants
from dualid.scenarios.latency import AlertMethod, alert_latency
from dualid.scenarios.metrics import nearest_rank_percentile

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlertResult:
    target_did: Optional[Did]
    latency_ms: float
    baseline_latency_ms: float
    correct_target: bool
    broadcast: bool
    truth_id: Optional[int]


@dataclass(frozen=True)
class RangingSample:
    """
    Claimed and sensed positions of one neighbor, with the true range.

    Covariances are per-axis variances or full 3x3 matrices.
    """

    observer_position: np.ndarray
    true_range_m: float
    ad_position: np.ndarray
    ad_covariance: Union[float, np.ndarray]
    vd_position: np.ndarray
    vd_covariance: Union[float, np.ndarray]


@dataclass(frozen=True)
class RangingErrors:
    ad: Tuple[float, ...]
    vd: Tuple[float, ...]
    fused: Tuple[float, ...]

    def p90(self) -> Dict[str, float]:
        return {
            "ad": nearest_rank_percentile(self.ad, 90),
            "vd": nearest_rank_percentile(self.vd, 90),
            "fused": nearest_rank_percentile(self.fused, 90),
        }


def _most_endangered(candidates: Sequence[Tuple[Hashable, np.ndarray, np.ndarray]]) -> Hashable:
    approaching = []
    ranked = []
    for key, offset, velocity in candidates:
        distance = float(np.linalg.norm(offset))
        closing = float(np.dot(offset, velocity))
        if distance > 0 and closing / distance < 0:
            approaching.append((distance, key))
        speed_sq = float(np.dot(velocity, velocity))
        tca = max(0.0, -closing / speed_sq) if speed_sq > 0 else math.inf
        ranked.append((tca, distance, key))
    if approaching:
        return min(approaching)[1]
    return min(ranked)[2]


def select_most_endangered(
    tracks: Sequence[Track], observer_position: Vec3, observer_velocity: Vec3 = Vec3.zero()
) -> int:
    """
    The nearest approaching confirmed track; otherwise the one closest in time
    to its closest approach.

    Args:
        tracks: Tracks of the observer
        observer_position: Observer position
        observer_velocity: Observer velocity

    Returns:
        track_id of the selected track
    """
    confirmed = [t for t in tracks if t.is_confirmed]
    if not confirmed:
        raise TrackingError("no confirmed tracks")
    origin, own_velocity = observer_position.as_array(), observer_velocity.as_array()
    return _most_endangered(
        [(t.track_id, t.position - origin, t.velocity - own_velocity) for t in confirmed]
    )


def most_endangered_truth(world: WorldState, observer_id: int, sense_range_m: float) -> Optional[int]:
    """Ground-truth most endangered physical neighbor within sensing range."""
    observer = world.node(observer_id)
    candidates = [
        (
            node.node_id,
            (node.position - observer.position).as_array(),
            (node.velocity - observer.velocity).as_array(),
        )
        for node in world.nodes
        if node.is_physical
        and node.node_id != observer_id
        and node.position.distance_to(observer.position) <= sense_range_m
    ]
    if not candidates:
        return None
    return _most_endangered(candidates)


def emergency_alert(
    world: WorldState,
    sender_id: int,
    tracks: Sequence[Track],
    cfg: LatencyConstants,
    sense_range_m: float,
    rng: Optional[np.random.Generator] = None,
) -> AlertResult:
    """
    Address an emergency alert to the most endangered neighbor.

    The target's identity comes from the track-to-Did mapping, so no beacon
    exchange or confirmation precedes the alert. A selected track without a
    mapped identity falls back to a broadcast, counted as mistargeted.

    Args:
        world: Current world (ground truth for scoring)
        sender_id: Alerting node
        tracks: Sender's tracks
        cfg: Latency constants
        sense_range_m: Sender's sensing range
        rng: Jitter source; no jitter when omitted

    Returns:
        Target, latencies of both schemes and correctness
    """
    sender = world.node(sender_id)
    track_id = select_most_endangered(tracks, sender.position, sender.velocity)
    track = next(t for t in tracks if t.track_id == track_id)
    ours = alert_latency(AlertMethod.OURS, cfg, rng)
    baseline = alert_latency(AlertMethod.BASELINE, cfg, rng)
    truth_id = most_endangered_truth(world, sender_id, sense_range_m)

    if track.associated_did is None:
        logger.warning("node %d: track %d has no identity, broadcasting alert", sender_id, track_id)
        return AlertResult(None, ours, baseline, False, True, truth_id)
    correct = truth_id is not None and track.associated_did == Did.for_node(truth_id)
    return AlertResult(track.associated_did, ours, baseline, correct, False, truth_id)


def _full_covariance(covariance: np.ndarray) -> np.ndarray:
    return covariance if covariance.ndim == 2 else covariance * np.eye(3)


def fuse_estimates(ad, ad_covariance, vd, vd_covariance):
    """
    Information-weighted combination of a claimed and a sensed estimate.

    A scalar covariance stands for an isotropic one. When both are scalar
    the positions may be batched along the leading axis; a 3x3 covariance
    fuses a single position, so a sensed estimate that is sharp along the
    line of sight and loose across it outweighs the claim only in range.

    Args:
        ad: Claimed position(s)
        ad_covariance: Per-axis variance or 3x3 covariance of the claim
        vd: Sensed position(s)
        vd_covariance: Per-axis variance or 3x3 covariance of the estimate

    Returns:
        Fused estimate and its covariance (a scalar when both inputs are)
    """
    ad_cov = np.asarray(ad_covariance, dtype=float)
    vd_cov = np.asarray(vd_covariance, dtype=float)
    ad, vd = np.asarray(ad, dtype=float), np.asarray(vd, dtype=float)
    if ad_cov.ndim == 0 and vd_cov.ndim == 0:
        w_ad, w_vd = 1.0 / ad_cov, 1.0 / vd_cov
        total = w_ad + w_vd
        return (w_ad * ad + w_vd * vd) / total, float(1.0 / total)
    info_ad = np.linalg.inv(_full_covariance(ad_cov))
    info_vd = np.linalg.inv(_full_covariance(vd_cov))
    covariance = np.linalg.inv(info_ad + info_vd)
    return covariance @ (info_ad @ ad + info_vd @ vd), covariance


def ranging_error_suite(samples: Sequence[RangingSample]) -> RangingErrors:
    """
    Absolute range errors of claimed-only, sensed-only and fused positions.

    Args:
        samples: One entry per matched neighbor and round

    Returns:
        Error series per method
    """
    ad: List[float] = []
    vd: List[float] = []
    fused: List[float] = []
    for s in samples:
        combined, _ = fuse_estimates(s.ad_position, s.ad_covariance, s.vd_position, s.vd_covariance)
        for series, position in ((ad, s.ad_position), (vd, s.vd_position), (fused, combined)):
            measured = float(np.linalg.norm(np.asarray(position) - s.observer_position))
            series.append(abs(measured - s.true_range_m))
    return RangingErrors(tuple(ad), tuple(vd), tuple(fused))
