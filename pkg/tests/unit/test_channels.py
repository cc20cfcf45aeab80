"""
Unit tests for the auditory- and visual-domain channels.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from dualid.core.attacks import AttackConfig, AttackRuntime
from dualid.core.channels import (
    MAX_WITNESS_REPORTS,
    AdReception,
    Did,
    RngDomain,
    RngStreams,
    RotorClass,
    SensorConfig,
    deliver,
    emit_beacons,
    epoch_period,
    is_ad_epoch,
    is_vd_epoch,
    measurement_variances,
    rotor_class_of,
    sense,
)
from dualid.core.world import Role, UavNode, Vec3, initial_world
from dualid.errors import ChannelError


def _lone_attacker_world():
    """One observer watching a malicious node that carries three phantoms."""
    return initial_world(
        [
            UavNode(1, Role.LEGITIMATE, Vec3(0.0, 0.0, 100.0)),
            UavNode(5, Role.MALICIOUS, Vec3(80.0, 0.0, 100.0)),
            UavNode(6, Role.SYBIL_PHANTOM, Vec3.zero(), host_id=5),
            UavNode(7, Role.SYBIL_PHANTOM, Vec3.zero(), host_id=5),
            UavNode(8, Role.SYBIL_PHANTOM, Vec3.zero(), host_id=5),
        ]
    )


class TestDid:
    """Test digital identities."""

    @pytest.mark.unit
    def test_node_and_fabricated_spaces_disjoint(self):
        assert Did.for_node(5) != Did.fabricated(5, 1)
        assert Did.fabricated(5, 1) != Did.fabricated(5, 2)
        assert Did.for_node(5) == Did.for_node(5)

    @pytest.mark.unit
    def test_hex_rendering(self):
        text = str(Did.for_node(1))
        assert len(text) == 16
        assert text == "a500000000000001"

    @pytest.mark.unit
    def test_out_of_range(self):
        with pytest.raises(ChannelError):
            Did(2**64)
        with pytest.raises(ChannelError):
            Did(-1)


class TestRotorClass:
    """Test rotor-count binning."""

    @pytest.mark.unit
    @pytest.mark.parametrize(
        "count, expected",
        [
            (0, RotorClass.NONE),
            (1, RotorClass.SINGLE),
            (4, RotorClass.QUAD),
            (6, RotorClass.HEX),
            (8, RotorClass.OCTO),
            (5, RotorClass.OTHER),
            (12, RotorClass.OTHER),
        ],
    )
    def test_bins(self, count, expected):
        assert rotor_class_of(count) == expected


class TestSensorConfig:
    """Test sensor parameter validation."""

    @pytest.mark.unit
    def test_defaults(self):
        config = SensorConfig()
        assert config.t_ad_s == 0.2
        assert config.t_vd_s == 0.05
        assert config.p_detect == 0.95

    @pytest.mark.unit
    def test_vd_must_refresh_faster(self):
        with pytest.raises(ValidationError):
            SensorConfig(t_ad_s=0.05, t_vd_s=0.2)

    @pytest.mark.unit
    def test_unknown_field(self):
        with pytest.raises(ValidationError):
            SensorConfig(sigma_gps=1.0)

    @pytest.mark.unit
    def test_zero_detection_probability_rejected(self):
        with pytest.raises(ValidationError):
            SensorConfig(p_detect=0.0)

    @pytest.mark.unit
    def test_variances_floored(self, quiet_sensors):
        variances = measurement_variances(quiet_sensors)
        assert all(v > 0 for v in variances)


class TestRngStreams:
    """Test seeded stream independence."""

    @pytest.mark.unit
    def test_same_seed_same_draws(self):
        a = RngStreams(11).get(3, RngDomain.VD).random(5)
        b = RngStreams(11).get(3, RngDomain.VD).random(5)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.unit
    def test_streams_do_not_interfere(self):
        left = RngStreams(11)
        right = RngStreams(11)
        left.get(2, RngDomain.AD).random(100)
        np.testing.assert_array_equal(
            left.get(3, RngDomain.VD).random(5), right.get(3, RngDomain.VD).random(5)
        )

    @pytest.mark.unit
    def test_stream_is_cached(self, rngs):
        assert rngs.get(1, RngDomain.AD) is rngs.get(1, RngDomain.AD)

    @pytest.mark.unit
    def test_negative_seed(self):
        with pytest.raises(ChannelError):
            RngStreams(-1)


class TestEpochs:
    """Test channel scheduling."""

    @pytest.mark.unit
    def test_periods(self, sensors):
        assert epoch_period(0.2, 0.01) == 20
        assert epoch_period(0.05, 0.01) == 5
        assert epoch_period(0.001, 0.01) == 1

    @pytest.mark.unit
    def test_schedule(self, sensors):
        ad = [e for e in range(41) if is_ad_epoch(e, 0.01, sensors)]
        vd = [e for e in range(21) if is_vd_epoch(e, 0.01, sensors)]
        assert ad == [0, 20, 40]
        assert vd == [0, 5, 10, 15, 20]


class TestEmitBeacons:
    """Test beacon emission."""

    @pytest.mark.unit
    def test_zero_noise_claims_truth(self, pair_world, quiet_sensors, rngs):
        (beacon,) = emit_beacons(pair_world, 2, quiet_sensors, rngs)
        node = pair_world.node(2)
        assert beacon.sender_did == Did.for_node(2)
        assert beacon.claimed_position == node.position
        assert beacon.claimed_velocity == node.velocity
        assert beacon.true_origin == beacon.transmitter == 2
        assert beacon.emit_time_s == 0.0

    @pytest.mark.unit
    def test_phantoms_do_not_transmit(self, cluster_world, sensors, rngs):
        with pytest.raises(ChannelError):
            emit_beacons(cluster_world, 6, sensors, rngs)

    @pytest.mark.unit
    def test_malicious_with_three_phantoms(self, cluster_world, sensors, rngs):
        runtime = AttackRuntime.start(AttackConfig(n_sybil=3), cluster_world, sensors, rngs)
        beacons = emit_beacons(cluster_world, 5, sensors, rngs, attack=runtime)
        assert len(beacons) == 4
        assert len({b.sender_did for b in beacons}) == 4
        assert all(b.transmitter == 5 for b in beacons)

    @pytest.mark.unit
    def test_malicious_without_attack_is_honest(self, cluster_world, sensors, rngs):
        beacons = emit_beacons(cluster_world, 5, sensors, rngs)
        assert [b.sender_did for b in beacons] == [Did.for_node(5)]

    @pytest.mark.unit
    def test_witness_reports_capped(self, pair_world, sensors, rngs):
        reports = tuple(range(MAX_WITNESS_REPORTS + 5))
        (beacon,) = emit_beacons(pair_world, 1, sensors, rngs, witness_reports=reports)
        assert beacon.witness_reports == reports[-MAX_WITNESS_REPORTS:]

    @pytest.mark.slow
    def test_claim_noise_matches_sigma(self, pair_world):
        config = SensorConfig(sigma_gnss_m=2.0)
        streams = RngStreams(3)
        truth = pair_world.node(1).position.as_array()
        errors = np.array(
            [
                emit_beacons(pair_world, 1, config, streams)[0].claimed_position.as_array() - truth
                for _ in range(100_000)
            ]
        )
        rms = np.sqrt(np.mean(errors**2, axis=0))
        np.testing.assert_allclose(rms, 2.0, rtol=0.02)


class TestDeliver:
    """Test beacon delivery."""

    def _world(self, gap):
        return initial_world(
            [
                UavNode(1, Role.LEGITIMATE, Vec3.zero()),
                UavNode(2, Role.LEGITIMATE, Vec3(gap, 0.0, 0.0)),
            ]
        )

    @pytest.mark.unit
    def test_in_range(self, rngs):
        config = SensorConfig(comm_range_m=100.0)
        world = self._world(50.0)
        receptions = deliver(world, emit_beacons(world, 1, config, rngs), config)
        assert list(receptions) == [2]
        (reception,) = receptions[2]
        assert reception.receive_time_s == pytest.approx(config.hop_latency_ms / 1000.0)
        assert reception.hops == 1

    @pytest.mark.unit
    def test_out_of_range(self, rngs):
        config = SensorConfig(comm_range_m=100.0)
        world = self._world(150.0)
        assert deliver(world, emit_beacons(world, 1, config, rngs), config) == {}

    @pytest.mark.unit
    def test_phantom_beacons_leave_from_host(self, sensors, rngs):
        world = _lone_attacker_world()
        runtime = AttackRuntime.start(AttackConfig(n_sybil=3), world, sensors, rngs)
        beacons = emit_beacons(world, 5, sensors, rngs, attack=runtime)
        receptions = deliver(world, beacons, sensors)
        # phantoms are not receivers
        assert list(receptions) == [1]
        assert len(receptions[1]) == 4

    @pytest.mark.unit
    def test_reception_cannot_precede_emission(self, pair_world, sensors, rngs):
        (beacon,) = emit_beacons(pair_world, 1, sensors, rngs)
        with pytest.raises(ChannelError):
            AdReception(beacon=beacon, receiver=2, receive_time_s=-1.0)


class TestSense:
    """Test echo measurements."""

    @pytest.mark.unit
    def test_phantoms_return_no_echo(self, rngs):
        config = SensorConfig(p_detect=1.0)
        measurements = sense(_lone_attacker_world(), 1, config, rngs)
        assert [m.true_source for m in measurements] == [5]

    @pytest.mark.unit
    def test_zero_noise_measurement(self, quiet_sensors, rngs):
        world = initial_world(
            [
                UavNode(1, Role.LEGITIMATE, Vec3.zero()),
                UavNode(2, Role.LEGITIMATE, Vec3(10.0, 0.0, 0.0), rotor_count=6),
            ]
        )
        (measurement,) = sense(world, 1, quiet_sensors, rngs)
        assert measurement.range_m == pytest.approx(10.0)
        assert measurement.azimuth_rad == pytest.approx(0.0)
        assert measurement.elevation_rad == pytest.approx(0.0)
        assert measurement.rotor_class == RotorClass.HEX
        assert measurement.observer == 1

    @pytest.mark.unit
    def test_out_of_sensing_range(self, rngs):
        config = SensorConfig(p_detect=1.0, sense_range_m=50.0)
        world = initial_world(
            [
                UavNode(1, Role.LEGITIMATE, Vec3.zero()),
                UavNode(2, Role.LEGITIMATE, Vec3(60.0, 0.0, 0.0)),
            ]
        )
        assert sense(world, 1, config, rngs) == []

    @pytest.mark.unit
    def test_angles_stay_in_range(self, rngs):
        config = SensorConfig(p_detect=1.0, sigma_angle_rad=0.5)
        world = initial_world(
            [
                UavNode(1, Role.LEGITIMATE, Vec3.zero()),
                UavNode(2, Role.LEGITIMATE, Vec3(-50.0, 0.0, 49.0)),
            ]
        )
        for _ in range(200):
            (m,) = sense(world, 1, config, rngs)
            assert -math.pi < m.azimuth_rad <= math.pi
            assert -math.pi / 2 <= m.elevation_rad <= math.pi / 2
            assert m.range_m >= 0.0

    @pytest.mark.unit
    def test_clutter_has_no_source(self, rngs):
        config = SensorConfig(p_detect=1.0, clutter_rate=3.0)
        world = initial_world([UavNode(1, Role.LEGITIMATE, Vec3.zero())])
        echoes = [m for _ in range(50) for m in sense(world, 1, config, rngs)]
        assert echoes
        assert all(m.true_source is None for m in echoes)
        assert all(0.0 <= m.range_m <= config.sense_range_m for m in echoes)

    @pytest.mark.slow
    def test_detection_rate(self):
        config = SensorConfig(p_detect=0.9)
        streams = RngStreams(5)
        world = initial_world(
            [
                UavNode(1, Role.LEGITIMATE, Vec3.zero()),
                UavNode(2, Role.LEGITIMATE, Vec3(40.0, 0.0, 0.0)),
            ]
        )
        detected = sum(len(sense(world, 1, config, streams)) for _ in range(10_000))
        sigma = math.sqrt(10_000 * 0.9 * 0.1)
        assert abs(detected - 9000) <= 3 * sigma
