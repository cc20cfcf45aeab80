"""
Epoch-driven simulation engine for DUALID.

Every epoch the world advances one fixed step. On beacon epochs every
physical node transmits and receivers queue what they hear; on sensing
epochs every legitimate node scans and updates its tracks. Once a beacon
round has arrived at a node, the node maps identities and judges them, and
the network's local views are merged into verdicts.

Everything a run observes is written to an ``EventLog``; scenario-specific
metrics are collected by observers hooked into the loop.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from dualid.core.attacks import AttackRuntime, find_did_collisions, relay_indirect
from dualid.core.auth import (
    Certifier,
    Judgment,
    Label,
    Verdict,
    WitnessReport,
    classify,
    merge_views,
)
from dualid.core.channels import (
    MAX_WITNESS_REPORTS,
    AdReception,
    Did,
    RngStreams,
    SensorConfig,
    deliver,
    emit_beacons,
    epoch_period,
    is_ad_epoch,
    is_vd_epoch,
    sense,
)
from dualid.core.identity import FeatureWeights, Pid, extract_pid_ad, extract_pid_vd, feature_weights
from dualid.core.mapping import Matched, MatchOutcome, UnmatchedVd, latest_per_did, map_identities
from dualid.core.tracking import Tracker, ucm_convert
from dualid.core.world import (
    ConstantVelocity,
    UavNode,
    Vec3,
    WaypointPath,
    WorldState,
    initial_world,
    step,
)
from dualid.scenarios.config import NodeSpec, ScenarioConfig, Thresholds

logger = logging.getLogger(__name__)

TIME_EPSILON_S = 1e-9


@dataclass(frozen=True)
class Event:
    epoch: int
    time_s: float
    kind: str
    payload: Dict[str, Any]

    def as_record(self) -> Dict[str, Any]:
        return {"epoch": self.epoch, "time_s": self.time_s, "kind": self.kind, "payload": self.payload}


@dataclass
class EventLog:
    """Ordered record of everything a run observed."""

    events: List[Event] = field(default_factory=list)

    def record(self, epoch: int, time_s: float, kind: str, **payload: Any) -> Event:
        event = Event(epoch, time_s, kind, payload)
        self.events.append(event)
        return event

    def of_kind(self, kind: str) -> List[Event]:
        return [e for e in self.events if e.kind == kind]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)


@dataclass(frozen=True)
class MappingRound:
    """
    One node's processing of one beacon round.

    ``origins`` maps each heard Did to the node that really sent it; it is
    ground truth kept for scoring and never read by the protocol.
    """

    node_id: int
    time_s: float
    ad_pids: Tuple[Pid, ...]
    vd_pids: Tuple[Pid, ...]
    outcomes: Tuple[MatchOutcome, ...]
    judgments: Tuple[Judgment, ...]
    origins: Mapping[Did, int]

    def matched(self) -> List[Matched]:
        return [o for o in self.outcomes if isinstance(o, Matched)]


@dataclass
class Agent:
    """A legitimate node: tracker, certifier and beacon inbox."""

    node_id: int
    did: Did
    tracker: Tracker
    certifier: Certifier
    pending: List[AdReception] = field(default_factory=list)
    outgoing: Deque[WitnessReport] = field(default_factory=lambda: deque(maxlen=MAX_WITNESS_REPORTS))

    @classmethod
    def for_node(cls, node_id: int, sensors: SensorConfig, thresholds: Thresholds) -> "Agent":
        did = Did.for_node(node_id)
        tracker = Tracker(
            gate=thresholds.gate(),
            q=thresholds.process_noise_q,
            staleness_s=1.5 * sensors.t_vd_s,
            sigma_v0=thresholds.sigma_v0_mps,
        )
        certifier = Certifier(
            node_id=node_id,
            did=did,
            sense_range_m=sensors.sense_range_m,
            window=thresholds.mmse_window,
            tau=thresholds.mmse_tau,
            q=thresholds.process_noise_q,
            body_gate_m=thresholds.body_gate_m,
        )
        return cls(node_id=node_id, did=did, tracker=tracker, certifier=certifier)

    def ready(self, time_s: float) -> List[List[AdReception]]:
        """Pop every arrived reception, grouped by emission round."""
        arrived = [r for r in self.pending if r.receive_time_s <= time_s + TIME_EPSILON_S]
        self.pending = [r for r in self.pending if r.receive_time_s > time_s + TIME_EPSILON_S]
        rounds: Dict[float, List[AdReception]] = {}
        for reception in arrived:
            rounds.setdefault(reception.beacon.emit_time_s, []).append(reception)
        return [rounds[t] for t in sorted(rounds)]

    def process_round(
        self,
        batch: Sequence[AdReception],
        own_position: Vec3,
        sensors: SensorConfig,
        thresholds: Thresholds,
    ) -> Optional[MappingRound]:
        """
        Map and judge the identities heard in one beacon round.

        Confirmed tracks are aligned to the round's emission time before
        matching, so both domains describe the same instant.

        Args:
            batch: Receptions of one emission round
            own_position: This node's position at emission time
            sensors: Sensor parameters
            thresholds: Matching and authentication thresholds

        Returns:
            The round record, or None when there was nothing to map
        """
        emit_time = batch[0].beacon.emit_time_s
        origins = {r.beacon.sender_did: r.beacon.true_origin for r in batch}
        for reception in batch:
            self.certifier.observe_reports(reception.beacon.witness_reports)
        ad_pids = [
            p for p in latest_per_did([extract_pid_ad(r, sensors) for r in batch]) if p.did != self.did
        ]
        self.certifier.observe_claims(ad_pids)

        confirmed = self.tracker.confirmed()
        vd_pids = [extract_pid_vd(t, emit_time, thresholds.process_noise_q) for t in confirmed]
        if not ad_pids and not vd_pids:
            return None

        population = vd_pids + ad_pids
        weights = feature_weights(population) if len(population) >= 2 else FeatureWeights.uniform()
        outcomes = map_identities(
            vd_pids,
            ad_pids,
            weights,
            thresholds.sim_min,
            kappa_rotor=thresholds.kappa_rotor,
            kappa_wing=thresholds.kappa_wing,
        )
        for outcome in outcomes:
            if isinstance(outcome, Matched):
                self.tracker.bind(vd_pids[outcome.vd_index].track_id, ad_pids[outcome.ad_index].did)
            elif isinstance(outcome, UnmatchedVd):
                self.tracker.bind(vd_pids[outcome.vd_index].track_id, None)

        judgments = self.certifier.judge(
            ad_pids,
            outcomes,
            [p.track_id for p in vd_pids],
            {t.track_id: t for t in confirmed},
            own_position,
            emit_time,
        )
        labels = {j.did: j.label for j in judgments}
        for outcome in outcomes:
            if not isinstance(outcome, Matched):
                continue
            subject = ad_pids[outcome.ad_index].did
            if labels.get(subject) == Label.CONSISTENT:
                self.outgoing.append(
                    WitnessReport(self.did, subject, vd_pids[outcome.vd_index], emit_time)
                )

        return MappingRound(
            node_id=self.node_id,
            time_s=emit_time,
            ad_pids=tuple(ad_pids),
            vd_pids=tuple(vd_pids),
            outcomes=tuple(outcomes),
            judgments=tuple(judgments),
            origins=origins,
        )


class ScenarioObserver:
    """Hooks a scenario kind uses to collect its metrics."""

    def on_epoch(self, sim: "Simulation") -> None:
        pass

    def on_vd_scan(self, sim: "Simulation", agent: Agent) -> None:
        pass

    def on_round(self, sim: "Simulation", agent: Agent, record: MappingRound) -> None:
        pass

    def on_evaluation(self, sim: "Simulation", verdicts: Sequence[Verdict]) -> None:
        pass

    def metrics(self, sim: "Simulation") -> Dict[str, float]:
        return {}


def node_from_spec(spec: NodeSpec) -> UavNode:
    trajectory = ConstantVelocity()
    if spec.waypoints:
        trajectory = WaypointPath(tuple(Vec3(*w) for w in spec.waypoints), float(spec.speed))
    return UavNode(
        node_id=spec.node_id,
        role=spec.role,
        position=Vec3(*spec.pos),
        velocity=Vec3(*spec.vel),
        wing_type=spec.wing,
        rotor_count=spec.rotors,
        host_id=spec.host,
        trajectory=trajectory,
    )


class Simulation:
    """
    One seeded scenario run.

    Args:
        config: Validated scenario
        observers: Metric collectors called from the loop
    """

    def __init__(self, config: ScenarioConfig, observers: Sequence[ScenarioObserver] = ()):
        self.config = config
        self.sensors = config.noise
        self.thresholds = config.thresholds
        self.dt_s = config.scenario.dt_s
        self.rngs = RngStreams(config.scenario.seed)
        self.world = initial_world([node_from_spec(n) for n in config.nodes], self.dt_s)
        self.attack: Optional[AttackRuntime] = None
        if config.attack is not None:
            self.attack = AttackRuntime.start(config.attack, self.world, self.sensors, self.rngs)
        self.agents: Dict[int, Agent] = {
            node_id: Agent.for_node(node_id, self.sensors, self.thresholds)
            for node_id in config.legitimate_ids()
        }
        self.observers = list(observers)
        self.events = EventLog()
        self.verdicts: List[Verdict] = []
        self.claim_history: Dict[Did, Dict[float, Vec3]] = {}
        keep = 3 * epoch_period(self.sensors.t_ad_s, self.dt_s) + 4
        self._past: Deque[WorldState] = deque(maxlen=keep)

    @property
    def schedule(self):
        return self.attack.schedule if self.attack is not None else None

    @property
    def time_s(self) -> float:
        return self.world.time_s

    def world_at(self, time_s: float) -> WorldState:
        """A recent world snapshot by time; the current one if it is gone."""
        epoch = int(round(time_s / self.dt_s))
        for world in reversed(self._past):
            if world.epoch == epoch:
                return world
        return self.world

    def run(self) -> EventLog:
        n_epochs = self.config.n_epochs
        logger.info(
            "running %s (%s), %d epochs, seed %d",
            self.config.scenario.name,
            self.config.scenario.kind.value,
            n_epochs,
            self.config.scenario.seed,
        )
        for epoch in range(n_epochs):
            if epoch > 0:
                self.world = step(self.world, self.dt_s)
            self._past.append(self.world)
            for observer in self.observers:
                observer.on_epoch(self)
            beacons = is_ad_epoch(epoch, self.dt_s, self.sensors)
            scans = is_vd_epoch(epoch, self.dt_s, self.sensors)
            if beacons:
                self._broadcast()
            if scans:
                self._sense()
            rounds = self._process_inboxes()
            if rounds:
                self._evaluate()
            self.events.record(epoch, self.time_s, "epoch", ad=beacons, vd=scans, rounds=rounds)
        logger.info("finished %s after %d events", self.config.scenario.name, len(self.events))
        return self.events

    def _broadcast(self) -> None:
        world = self.world
        on_air = []
        for node in world.nodes:
            if not node.is_physical:
                continue
            agent = self.agents.get(node.node_id)
            reports = tuple(agent.outgoing) if agent is not None else ()
            on_air.extend(
                emit_beacons(world, node.node_id, self.sensors, self.rngs, self.attack, reports)
            )
        deliveries = relay_indirect(deliver(world, on_air, self.sensors), world, self.schedule, self.sensors)
        for receiver in sorted(deliveries):
            agent = self.agents.get(receiver)
            if agent is None:
                continue
            batch = deliveries[receiver]
            agent.pending.extend(batch)
            for reception in batch:
                beacon = reception.beacon
                self.claim_history.setdefault(beacon.sender_did, {})[beacon.emit_time_s] = (
                    beacon.claimed_position
                )
            for did in find_did_collisions(batch):
                logger.warning("node %d hears %s from more than one origin", receiver, did)
                self.events.record(world.epoch, world.time_s, "did_collision", node=receiver, did=str(did))

    def _sense(self) -> None:
        for node_id, agent in sorted(self.agents.items()):
            observer = self.world.node(node_id)
            echoes = sense(self.world, node_id, self.sensors, self.rngs)
            measurements = [ucm_convert(m, observer.position) for m in echoes]
            agent.tracker.scan(measurements, self.time_s)
            for obs in self.observers:
                obs.on_vd_scan(self, agent)

    def _process_inboxes(self) -> int:
        processed = 0
        for node_id, agent in sorted(self.agents.items()):
            for batch in agent.ready(self.time_s):
                emitted = self.world_at(batch[0].beacon.emit_time_s)
                record = agent.process_round(
                    batch, emitted.node(node_id).position, self.sensors, self.thresholds
                )
                if record is None:
                    continue
                processed += 1
                self.events.record(
                    self.world.epoch,
                    self.time_s,
                    "mapping",
                    node=node_id,
                    round_time_s=record.time_s,
                    n_vd=len(record.vd_pids),
                    n_ad=len(record.ad_pids),
                    matched=len(record.matched()),
                )
                for observer in self.observers:
                    observer.on_round(self, agent, record)
        return processed

    def _evaluate(self) -> None:
        max_age = 2.0 * self.sensors.t_ad_s
        views = [a.certifier.local_view(self.time_s, max_age) for _, a in sorted(self.agents.items())]
        global_view = merge_views(views, self.thresholds.quorum)
        matched = set().union(*(v.matched for v in views))
        self.verdicts = classify(global_view, matched)
        self.events.record(
            self.world.epoch,
            self.time_s,
            "verdicts",
            trusted_core=sorted(str(d) for d in global_view.trusted_core),
            verdicts={str(v.did): v.verdict.value for v in self.verdicts},
        )
        for observer in self.observers:
            observer.on_evaluation(self, self.verdicts)

    def claim_series(self) -> Dict[Did, List[Tuple[float, Vec3]]]:
        """Every claimed position heard by legitimate nodes, per Did in time order."""
        return {did: sorted(series.items()) for did, series in self.claim_history.items()}
