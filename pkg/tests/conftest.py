"""
Pytest configuration and fixtures for DUALID tests.
"""

from pathlib import Path

import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from dualid.core.channels import RngStreams, RotorClass, SensorConfig
from dualid.core.identity import Domain, Pid
from dualid.core.world import Role, UavNode, Vec3, WingType, initial_world
from dualid.models.ledger_model import create_tables
from dualid.scenarios.config import config_from_mapping, load_config
from dualid.scenarios.engine import node_from_spec

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def configs_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture
def sensors() -> SensorConfig:
    return SensorConfig()


@pytest.fixture
def quiet_sensors() -> SensorConfig:
    """Noise-free sensing with certain detection."""
    return SensorConfig(
        sigma_gnss_m=0.0,
        sigma_r_m=0.0,
        sigma_angle_rad=0.0,
        sigma_v_mps=0.0,
        p_detect=1.0,
        rotor_confusion_prob=0.0,
    )


@pytest.fixture
def rngs() -> RngStreams:
    return RngStreams(7)


@pytest.fixture
def make_pid():
    """Factory for PIDs with sensible defaults."""

    def factory(
        domain=Domain.AD,
        position=(0.0, 0.0, 100.0),
        speed=5.0,
        heading=0.0,
        wing_type=WingType.ROTARY,
        rotor_class=RotorClass.QUAD,
        sigma_position=2.0,
        sigma_speed=0.5,
        sigma_heading=0.1,
        time_s=0.0,
        did=None,
        track_id=None,
    ) -> Pid:
        return Pid(
            domain=domain,
            position=Vec3(*position),
            speed=speed,
            heading=heading,
            wing_type=wing_type,
            rotor_class=rotor_class,
            sigma_position=sigma_position,
            sigma_speed=sigma_speed,
            sigma_heading=sigma_heading,
            time_s=time_s,
            did=did,
            track_id=track_id,
        )

    return factory


@pytest.fixture
def pair_world():
    """Two legitimate nodes 100 m apart, the second flying toward the first."""
    return initial_world(
        [
            UavNode(1, Role.LEGITIMATE, Vec3(0.0, 0.0, 100.0)),
            UavNode(2, Role.LEGITIMATE, Vec3(100.0, 0.0, 100.0), Vec3(-5.0, 0.0, 0.0)),
        ]
    )


@pytest.fixture
def cluster_config():
    return config_from_mapping(
        {
            "scenario": {
                "name": "sybil_cluster",
                "kind": "sybil_detection",
                "duration_s": 6.0,
                "layout": "sybil_cluster",
            },
            "attack": {"n_sybil": 3},
        }
    )


@pytest.fixture
def cluster_world(cluster_config):
    return initial_world([node_from_spec(n) for n in cluster_config.nodes], 0.01)


@pytest.fixture
def sybil_config(configs_dir):
    return load_config(configs_dir / "sybil_cluster.ini")


@pytest.fixture
def ledger_session():
    """In-memory results ledger."""
    engine = create_engine("sqlite:///:memory:", echo=False)
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    create_tables(engine)
    session = SessionLocal()
    try:
        yield session
    finally:
        session.close()
        engine.dispose()


@pytest.fixture
def short_config():
    """Factory for brief scenario runs on a named layout."""

    def factory(kind="sybil_detection", layout="sybil_cluster", duration_s=0.6, seed=0, **sections):
        raw = {
            "scenario": {
                "name": f"short_{layout}",
                "kind": kind,
                "duration_s": duration_s,
                "seed": seed,
                "layout": layout,
            }
        }
        raw["scenario"].update(sections.pop("scenario", {}))
        raw.update(sections)
        return config_from_mapping(raw)

    return factory
