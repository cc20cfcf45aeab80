"""
Unit tests for Sybil attacker behavior.
"""

import math
from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError

from dualid.core.attacks import (
    AttackConfig,
    AttackRuntime,
    ClaimMotion,
    ClaimState,
    HopMode,
    IdMode,
    TimeMode,
    find_did_collisions,
    plan_attack,
    relay_indirect,
    sybil_claims,
)
from dualid.core.channels import AdReception, Did, RngDomain, SensorConfig, deliver, emit_beacons
from dualid.core.world import Role, UavNode, Vec3, initial_world, step
from dualid.errors import AttackError
from dualid.scenarios.config import config_from_mapping
from dualid.scenarios.engine import node_from_spec


def layout_world(layout, n_sybil=3):
    config = config_from_mapping(
        {
            "scenario": {"name": layout, "kind": "sybil_detection", "duration_s": 1.0, "layout": layout},
            "attack": {"n_sybil": n_sybil},
        }
    )
    return initial_world([node_from_spec(n) for n in config.nodes], 0.01)


class TestAttackConfig:
    """Test attack parameter validation."""

    @pytest.mark.unit
    def test_defaults(self):
        cfg = AttackConfig()
        assert cfg.hop_mode == HopMode.DIRECT
        assert cfg.time_mode == TimeMode.SIMULTANEOUS
        assert cfg.id_mode == IdMode.FABRICATED
        assert cfg.n_sybil == 3

    @pytest.mark.unit
    def test_invalid(self):
        with pytest.raises(ValidationError):
            AttackConfig(n_sybil=0)
        with pytest.raises(ValidationError):
            AttackConfig(hop_mode="teleport")


class TestPlanAttack:
    """Test attack planning."""

    @pytest.mark.unit
    def test_simultaneous(self, cluster_world, sensors, rngs):
        schedule = plan_attack(AttackConfig(), cluster_world, sensors, rngs)
        assert schedule.host_id == 5
        assert [p.node_id for p in schedule.phantoms] == [6, 7, 8]
        assert [p.spawn_time_s for p in schedule.phantoms] == [0.0, 0.0, 0.0]
        assert len(schedule.active(0.0)) == 3
        assert len(set(schedule.dids())) == 4
        assert schedule.forwarder_id is None

    @pytest.mark.unit
    def test_non_simultaneous(self, cluster_world, sensors, rngs):
        cfg = AttackConfig(time_mode=TimeMode.NON_SIMULTANEOUS, spawn_interval_s=5.0)
        schedule = plan_attack(cfg, cluster_world, sensors, rngs)
        assert [p.spawn_time_s for p in schedule.phantoms] == [0.0, 5.0, 10.0]
        assert len(schedule.active(4.99)) == 1
        assert len(schedule.active(5.0)) == 2

    @pytest.mark.unit
    def test_bearings_evenly_spread(self, cluster_world, sensors, rngs):
        schedule = plan_attack(AttackConfig(), cluster_world, sensors, rngs)
        bearings = [p.bearing_rad for p in schedule.phantoms]
        gaps = np.diff(bearings)
        np.testing.assert_allclose(gaps, 2.0 * math.pi / 3)

    @pytest.mark.unit
    def test_phantom_count_must_match(self, cluster_world, sensors, rngs):
        with pytest.raises(AttackError, match="needs 2 phantoms"):
            plan_attack(AttackConfig(n_sybil=2), cluster_world, sensors, rngs)

    @pytest.mark.unit
    def test_no_malicious_node(self, pair_world, sensors, rngs):
        with pytest.raises(AttackError, match="no malicious node"):
            plan_attack(AttackConfig(), pair_world, sensors, rngs)

    @pytest.mark.unit
    def test_host_must_be_malicious(self, cluster_world, sensors, rngs):
        with pytest.raises(AttackError, match="not malicious"):
            plan_attack(AttackConfig(host_id=1), cluster_world, sensors, rngs)

    @pytest.mark.unit
    def test_nothing_to_steal_nearby(self, cluster_world, sensors, rngs):
        with pytest.raises(AttackError, match="no identity to steal"):
            plan_attack(AttackConfig(id_mode=IdMode.STOLEN), cluster_world, sensors, rngs)

    @pytest.mark.unit
    def test_stolen_identity_belongs_to_far_node(self, rngs):
        sensors = SensorConfig(comm_range_m=200.0, sense_range_m=150.0)
        world = initial_world(
            [
                UavNode(1, Role.LEGITIMATE, Vec3(100.0, 0.0, 100.0)),
                UavNode(2, Role.LEGITIMATE, Vec3(900.0, 0.0, 100.0), rotor_count=6),
                UavNode(5, Role.MALICIOUS, Vec3(0.0, 0.0, 100.0)),
                UavNode(6, Role.SYBIL_PHANTOM, Vec3.zero(), host_id=5),
            ]
        )
        cfg = AttackConfig(id_mode=IdMode.STOLEN, n_sybil=1)
        runtime = AttackRuntime.start(cfg, world, sensors, rngs)
        (phantom,) = runtime.schedule.phantoms
        assert phantom.stolen_from == 2
        assert phantom.did == Did.for_node(2)
        beacons = runtime.forge(world, 5, ())
        assert beacons[1].sender_did == Did.for_node(2)
        assert beacons[1].claimed_rotor_count == 6

    @pytest.mark.unit
    def test_relay_picks_forwarder_beyond_sensing(self, sensors, rngs):
        world = layout_world("relay", n_sybil=2)
        schedule = plan_attack(AttackConfig(hop_mode=HopMode.INDIRECT, n_sybil=2), world, sensors, rngs)
        assert schedule.forwarder_id == 3

    @pytest.mark.unit
    def test_explicit_forwarder_must_be_reachable(self, sensors, rngs):
        world = layout_world("relay", n_sybil=2)
        cfg = AttackConfig(hop_mode=HopMode.INDIRECT, n_sybil=2, forwarder_id=1)
        assert plan_attack(cfg, world, sensors, rngs).forwarder_id == 1
        far = SensorConfig(comm_range_m=100.0, sense_range_m=50.0, t_vd_s=0.05)
        with pytest.raises(AttackError, match="no forwarder"):
            plan_attack(cfg, world, far, rngs)


class TestSybilClaims:
    """Test phantom claim generation."""

    def _plan(self, cluster_world, sensors, rngs, **overrides):
        cfg = AttackConfig(**overrides)
        return cfg, plan_attack(cfg, cluster_world, sensors, rngs)

    @pytest.mark.unit
    def test_fixed_offset(self, cluster_world, sensors, rngs):
        cfg, schedule = self._plan(cluster_world, sensors, rngs, claim_offset_m=30.0)
        host = cluster_world.node(5)
        rng = rngs.get(6, RngDomain.PHANTOM)
        plan = schedule.phantoms[0]
        position, velocity, state = sybil_claims(plan, host, cfg, 0.0, rng)
        assert position.distance_to(host.position) == pytest.approx(30.0)
        assert position.z == host.position.z
        assert velocity == host.velocity
        moved = step(cluster_world, 0.2)
        later, later_velocity, _ = sybil_claims(plan, moved.node(5), cfg, 0.2, rng, state)
        offset_before = position - host.position
        offset_after = later - moved.node(5).position
        assert offset_after.distance_to(offset_before) < 1e-9
        expected = (later - position).scale(1.0 / 0.2)
        assert later_velocity.distance_to(expected) < 1e-9

    @pytest.mark.unit
    def test_not_active_yet(self, cluster_world, sensors, rngs):
        cfg, schedule = self._plan(
            cluster_world, sensors, rngs, time_mode=TimeMode.NON_SIMULTANEOUS, spawn_interval_s=5.0
        )
        with pytest.raises(AttackError, match="not active"):
            sybil_claims(schedule.phantoms[2], cluster_world.node(5), cfg, 1.0, rngs.get(8, RngDomain.PHANTOM))

    @pytest.mark.slow
    def test_independent_walk_decorrelated_from_host(self, cluster_world, sensors, rngs):
        cfg, schedule = self._plan(cluster_world, sensors, rngs, claim_motion=ClaimMotion.INDEPENDENT_WALK)
        plan = schedule.phantoms[0]
        rng = rngs.get(plan.node_id, RngDomain.PHANTOM)
        world, state = cluster_world, ClaimState()
        host_track, claim_track = [], []
        for k in range(101):
            position, velocity, state = sybil_claims(plan, world.node(5), cfg, world.time_s, rng, state)
            claim_track.append(position.as_array())
            host_track.append(world.node(5).position.as_array())
            for _ in range(20):
                world = step(world, 0.01)
        host_steps = np.diff(host_track, axis=0).ravel()
        claim_steps = np.diff(claim_track, axis=0).ravel()
        assert abs(np.corrcoef(host_steps, claim_steps)[0, 1]) < 0.2


class TestForge:
    """Test the attacker's beacon round."""

    @pytest.mark.unit
    def test_host_claim_disguised(self, cluster_world, quiet_sensors, rngs):
        cfg = AttackConfig(host_claim_offset_m=12.0)
        runtime = AttackRuntime.start(cfg, cluster_world, quiet_sensors, rngs)
        beacons = runtime.forge(cluster_world, 5, ())
        host = cluster_world.node(5)
        assert beacons[0].sender_did == Did.for_node(5)
        assert beacons[0].claimed_position.distance_to(host.position) == pytest.approx(12.0)
        assert [b.true_origin for b in beacons] == [5, 6, 7, 8]

    @pytest.mark.unit
    def test_forged_witness_reports(self, cluster_world, sensors, rngs):
        runtime = AttackRuntime.start(AttackConfig(forge_witness=True), cluster_world, sensors, rngs)
        first = runtime.forge(cluster_world, 5, ())
        assert first[0].witness_reports == ()
        second = runtime.forge(step(cluster_world, 0.2), 5, ())
        subjects = {r.subject_did for r in second[0].witness_reports}
        assert subjects == {p.did for p in runtime.schedule.phantoms}
        assert all(r.witness_did == Did.for_node(5) for r in second[0].witness_reports)

    @pytest.mark.unit
    def test_spawned_over_time(self, cluster_world, sensors, rngs):
        cfg = AttackConfig(time_mode=TimeMode.NON_SIMULTANEOUS, spawn_interval_s=0.1)
        runtime = AttackRuntime.start(cfg, cluster_world, sensors, rngs)
        assert len(runtime.forge(cluster_world, 5, ())) == 2
        world = cluster_world
        for _ in range(20):
            world = step(world, 0.01)
        assert len(runtime.forge(world, 5, ())) == 4


class TestRelayIndirect:
    """Test relayed delivery."""

    @pytest.mark.unit
    def test_direct_is_pass_through(self, cluster_world, sensors, rngs):
        runtime = AttackRuntime.start(AttackConfig(), cluster_world, sensors, rngs)
        receptions = deliver(cluster_world, emit_beacons(cluster_world, 5, sensors, rngs, runtime), sensors)
        assert relay_indirect(receptions, cluster_world, runtime.schedule, sensors) is receptions
        assert relay_indirect(receptions, cluster_world, None, sensors) is receptions

    @pytest.mark.unit
    def test_two_hop_latency(self, sensors, rngs):
        world = layout_world("relay", n_sybil=2)
        runtime = AttackRuntime.start(AttackConfig(hop_mode=HopMode.INDIRECT, n_sybil=2), world, sensors, rngs)
        beacons = emit_beacons(world, 5, sensors, rngs, runtime)
        routed = relay_indirect(deliver(world, beacons, sensors), world, runtime.schedule, sensors)

        assert all(r.hops == 1 for r in routed[3])
        assert len(routed[3]) == 3
        hop_s = sensors.hop_latency_ms / 1000.0
        for receiver in (1, 2):
            assert len(routed[receiver]) == 3
            for reception in routed[receiver]:
                assert reception.hops == 2
                assert reception.beacon.transmitter == 3
                assert reception.receive_time_s == pytest.approx(2 * hop_s + sensors.t_ad_s)
        assert 5 not in routed

    @pytest.mark.unit
    def test_did_collisions(self, pair_world, sensors, rngs):
        (a,) = emit_beacons(pair_world, 1, sensors, rngs)
        (b,) = emit_beacons(pair_world, 2, sensors, rngs)
        forged = AdReception(beacon=replace(b, sender_did=a.sender_did), receiver=3, receive_time_s=0.01)
        honest = AdReception(beacon=a, receiver=3, receive_time_s=0.01)
        assert find_did_collisions([honest, forged]) == [a.sender_did]
        assert find_did_collisions([honest]) == []
