"""
Scenario metrics for DUALID.

Defines the metric set each scenario kind reports, nearest-rank percentiles
and detection scores.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Sequence, Set, Tuple

import numpy as np

from dualid.errors import DualIdError
from dualid.scenarios.config import ScenarioKind

Metrics = Dict[str, float]

METRICS_BY_KIND: Dict[ScenarioKind, Tuple[str, ...]] = {
    ScenarioKind.BEAM_MANAGEMENT: (
        "beam_latency_isac_ms",
        "beam_latency_sweep_ms",
        "beam_latency_reduction_ms",
        "pointing_error_stale_deg",
        "pointing_error_one_step_deg",
        "pointing_error_two_step_deg",
        "targeting_accuracy",
        "access_events",
    ),
    ScenarioKind.EMERGENCY_ALERT: (
        "alert_latency_ours_ms",
        "alert_latency_baseline_ms",
        "alert_latency_reduction",
        "alert_correct_rate",
        "alert_broadcasts",
        "ranging_error_p90_ad_m",
        "ranging_error_p90_vd_m",
        "ranging_error_p90_fused_m",
    ),
    ScenarioKind.SYBIL_DETECTION: (
        "precision",
        "recall",
        "f1",
        "baseline_precision",
        "baseline_recall",
        "baseline_f1",
        "detection_epoch",
        "false_positive_rate",
        "n_flagged",
    ),
}


@dataclass(frozen=True)
class DetectionScores:
    precision: float
    recall: float
    f1: float


def nearest_rank_percentile(values: Iterable[float], p: float) -> float:
    """
    The p-th percentile as the ceil(p*n/100)-th smallest value.

    Returns NaN for an empty series.
    """
    if not 0 < p <= 100:
        raise DualIdError("percentile must lie in (0, 100]")
    ordered = sorted(values)
    if not ordered:
        return math.nan
    rank = max(1, math.ceil(p * len(ordered) / 100.0))
    return float(ordered[rank - 1])


def detection_metrics(flagged: Iterable[object], truth: Iterable[object]) -> DetectionScores:
    """
    Precision, recall and F1 of a flagged set against the true positives.

    Ratios with an empty denominator are 0.
    """
    flagged_set: Set[object] = set(flagged)
    truth_set: Set[object] = set(truth)
    hits = len(flagged_set & truth_set)
    precision = hits / len(flagged_set) if flagged_set else 0.0
    recall = hits / len(truth_set) if truth_set else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return DetectionScores(precision, recall, f1)


def mean_or_nan(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def angle_between_deg(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two pointing directions, in degrees."""
    if np.linalg.norm(a) == 0 or np.linalg.norm(b) == 0:
        return math.nan
    cross = float(np.linalg.norm(np.cross(a, b)))
    return math.degrees(math.atan2(cross, float(np.dot(a, b))))


def complete(kind: ScenarioKind, values: Metrics) -> Metrics:
    """Metrics for ``kind`` in canonical order; anything missing is NaN."""
    return {name: float(values.get(name, math.nan)) for name in METRICS_BY_KIND[kind]}
