"""
Scenario runners for DUALID.

``run_scenario`` drives a ``Simulation`` with the observer that belongs to
the scenario kind and returns the kind's complete metric set.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from dualid.core.auth import Verdict, baseline_mobility_detect, positives
from dualid.core.channels import Did, RngDomain, epoch_period
from dualid.core.tracking import predict_ahead
from dualid.errors import AuthError
from dualid.scenarios.applications import (
    AlertResult,
    RangingSample,
    emergency_alert,
    ranging_error_suite,
)
from dualid.scenarios.config import ScenarioConfig, ScenarioKind
from dualid.scenarios.engine import Agent, EventLog, MappingRound, ScenarioObserver, Simulation
from dualid.scenarios.latency import BeamMethod, beam_access_latency, latency_reduction
from dualid.scenarios.metrics import (
    Metrics,
    angle_between_deg,
    complete,
    detection_metrics,
    mean_or_nan,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PendingPointing:
    due_epoch: int
    horizon: str
    predicted: np.ndarray
    source: int


class BeamObserver(ScenarioObserver):
    """
    Scores beam access toward every confirmed neighbor of the observer.

    Each access points the beam at the current estimate (stale), or at the
    one- or two-step prediction, and is scored against the true position
    once that time has come.
    """

    def __init__(self, observer_id: int, warmup_s: float):
        self.observer_id = observer_id
        self.warmup_s = warmup_s
        self.pending: List[PendingPointing] = []
        self.errors: Dict[str, List[float]] = {"stale": [], "one_step": [], "two_step": []}
        self.isac_ms: List[float] = []
        self.sweep_ms: List[float] = []
        self.on_target: List[bool] = []

    def on_epoch(self, sim: Simulation) -> None:
        epoch = sim.world.epoch
        due = [p for p in self.pending if p.due_epoch == epoch]
        self.pending = [p for p in self.pending if p.due_epoch > epoch]
        observer = sim.world.node(self.observer_id).position.as_array()
        for pointing in due:
            truth = sim.world.node(pointing.source).position.as_array()
            error = angle_between_deg(pointing.predicted - observer, truth - observer)
            if not math.isnan(error):
                self.errors[pointing.horizon].append(error)

    def on_vd_scan(self, sim: Simulation, agent: Agent) -> None:
        if agent.node_id != self.observer_id or sim.time_s < self.warmup_s:
            return
        observer = sim.world.node(self.observer_id)
        dt_vd = sim.sensors.t_vd_s
        steps = epoch_period(dt_vd, sim.dt_s)
        epoch = sim.world.epoch
        q = sim.thresholds.process_noise_q
        for track in agent.tracker.confirmed():
            if track.last_source is None:
                continue
            distance = sim.world.node(track.last_source).position.distance_to(observer.position)
            latency = sim.config.latency
            self.isac_ms.append(beam_access_latency(BeamMethod.ISAC, latency, distance))
            self.sweep_ms.append(beam_access_latency(BeamMethod.SWEEP, latency, distance))
            self.on_target.append(track.associated_did == Did.for_node(track.last_source))

            one = predict_ahead(track, 1, dt_vd, observer.position, q).position.as_array()
            two = predict_ahead(track, 2, dt_vd, observer.position, q).position.as_array()
            self.pending.extend(
                [
                    PendingPointing(epoch + 2 * steps, "stale", track.position.copy(), track.last_source),
                    PendingPointing(epoch + steps, "one_step", one, track.last_source),
                    PendingPointing(epoch + 2 * steps, "two_step", two, track.last_source),
                ]
            )

    def metrics(self, sim: Simulation) -> Metrics:
        isac, sweep = mean_or_nan(self.isac_ms), mean_or_nan(self.sweep_ms)
        return {
            "beam_latency_isac_ms": isac,
            "beam_latency_sweep_ms": sweep,
            "beam_latency_reduction_ms": sweep - isac,
            "pointing_error_stale_deg": mean_or_nan(self.errors["stale"]),
            "pointing_error_one_step_deg": mean_or_nan(self.errors["one_step"]),
            "pointing_error_two_step_deg": mean_or_nan(self.errors["two_step"]),
            "targeting_accuracy": mean_or_nan([float(x) for x in self.on_target]),
            "access_events": float(len(self.on_target)),
        }


class AlertObserver(ScenarioObserver):
    """Raises an emergency alert after each beacon round the sender processes."""

    def __init__(self, sender_id: int, warmup_s: float):
        self.sender_id = sender_id
        self.warmup_s = warmup_s
        self.alerts: List[AlertResult] = []
        self.samples: List[RangingSample] = []

    def on_round(self, sim: Simulation, agent: Agent, record: MappingRound) -> None:
        if agent.node_id != self.sender_id:
            return
        self._collect_ranging(sim, record)
        if sim.time_s < self.warmup_s or not agent.tracker.confirmed():
            return
        result = emergency_alert(
            sim.world,
            self.sender_id,
            agent.tracker.tracks,
            sim.config.latency,
            sim.sensors.sense_range_m,
            sim.rngs.get(self.sender_id, RngDomain.LATENCY),
        )
        self.alerts.append(result)
        sim.events.record(
            sim.world.epoch,
            sim.time_s,
            "alert",
            target=str(result.target_did) if result.target_did is not None else None,
            truth=result.truth_id,
            correct=result.correct_target,
            broadcast=result.broadcast,
            latency_ms=result.latency_ms,
            baseline_latency_ms=result.baseline_latency_ms,
        )

    def _collect_ranging(self, sim: Simulation, record: MappingRound) -> None:
        world = sim.world_at(record.time_s)
        own = world.node(self.sender_id).position
        for outcome in record.matched():
            ad = record.ad_pids[outcome.ad_index]
            vd = record.vd_pids[outcome.vd_index]
            origin = record.origins.get(ad.did)
            if origin is None:
                continue
            self.samples.append(
                RangingSample(
                    observer_position=own.as_array(),
                    true_range_m=world.node(origin).position.distance_to(own),
                    ad_position=ad.position.as_array(),
                    ad_covariance=ad.covariance(),
                    vd_position=vd.position.as_array(),
                    vd_covariance=vd.covariance(),
                )
            )

    def metrics(self, sim: Simulation) -> Metrics:
        ours = mean_or_nan([a.latency_ms for a in self.alerts])
        baseline = mean_or_nan([a.baseline_latency_ms for a in self.alerts])
        p90 = ranging_error_suite(self.samples).p90()
        return {
            "alert_latency_ours_ms": ours,
            "alert_latency_baseline_ms": baseline,
            "alert_latency_reduction": latency_reduction(ours, baseline) if self.alerts else math.nan,
            "alert_correct_rate": mean_or_nan([float(a.correct_target) for a in self.alerts]),
            "alert_broadcasts": float(sum(a.broadcast for a in self.alerts)),
            "ranging_error_p90_ad_m": p90["ad"],
            "ranging_error_p90_vd_m": p90["vd"],
            "ranging_error_p90_fused_m": p90["fused"],
        }


class SybilObserver(ScenarioObserver):
    """Scores the final verdicts and the lockstep-mobility baseline."""

    def __init__(self):
        self.detection_epoch = None

    def _attacker_dids(self, sim: Simulation) -> set:
        schedule = sim.schedule
        if schedule is None:
            return set()
        return {Did.for_node(schedule.host_id)} | {p.did for p in schedule.active(sim.time_s)}

    def on_evaluation(self, sim: Simulation, verdicts: Sequence[Verdict]) -> None:
        if self.detection_epoch is not None:
            return
        attackers = self._attacker_dids(sim)
        if attackers and attackers <= positives(verdicts):
            self.detection_epoch = sim.world.epoch
            logger.info("every attacker identity flagged at epoch %d", self.detection_epoch)

    def metrics(self, sim: Simulation) -> Metrics:
        truth = self._attacker_dids(sim)
        flagged = positives(sim.verdicts)
        ours = detection_metrics(flagged, truth)

        thresholds = sim.thresholds
        try:
            baseline_verdicts = baseline_mobility_detect(
                sim.claim_series(),
                thresholds.baseline_window,
                thresholds.baseline_rho,
                thresholds.baseline_distance_variance_m2,
            )
        except AuthError as exc:
            logger.warning("mobility baseline skipped: %s", exc.detail)
            baseline_verdicts = []
        baseline = detection_metrics(positives(baseline_verdicts), truth)

        heard = {v.did for v in sim.verdicts}
        legitimate = {Did.for_node(i) for i in sim.config.legitimate_ids()} - truth
        legitimate_heard = legitimate & heard
        false_positive_rate = (
            len(flagged & legitimate_heard) / len(legitimate_heard) if legitimate_heard else 0.0
        )
        return {
            "precision": ours.precision,
            "recall": ours.recall,
            "f1": ours.f1,
            "baseline_precision": baseline.precision,
            "baseline_recall": baseline.recall,
            "baseline_f1": baseline.f1,
            "detection_epoch": float(self.detection_epoch if self.detection_epoch is not None else -1),
            "false_positive_rate": false_positive_rate,
            "n_flagged": float(len(flagged)),
        }


def observer_for(config: ScenarioConfig) -> ScenarioObserver:
    kind = config.scenario.kind
    if kind == ScenarioKind.BEAM_MANAGEMENT:
        return BeamObserver(config.sender(), config.scenario.warmup_s)
    if kind == ScenarioKind.EMERGENCY_ALERT:
        return AlertObserver(config.sender(), config.scenario.warmup_s)
    return SybilObserver()


def run_simulation(config: ScenarioConfig) -> Tuple[Simulation, ScenarioObserver]:
    """Run a scenario and hand back the finished simulation for inspection."""
    observer = observer_for(config)
    simulation = Simulation(config, [observer])
    simulation.run()
    return simulation, observer


def run_scenario(config: ScenarioConfig) -> Tuple[Metrics, EventLog]:
    """
    Run one seeded scenario.

    Args:
        config: Validated scenario

    Returns:
        The kind's complete metric set and the run's event log
    """
    simulation, observer = run_simulation(config)
    metrics = complete(config.scenario.kind, observer.metrics(simulation))
    return metrics, simulation.events
