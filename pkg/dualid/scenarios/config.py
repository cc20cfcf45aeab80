"""
Scenario configuration for DUALID.

Scenarios are described in INI files (the same format alembic.ini uses) and
validated into pydantic models. Unknown keys are rejected, and every
validation problem is reported with a dotted field path.
"""

import configparser
import logging
import shlex
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dualid.core.attacks import AttackConfig
from dualid.core.auth import (
    BASELINE_DISTANCE_VARIANCE_M2,
    BASELINE_RHO,
    BASELINE_WINDOW,
    BODY_GATE_M,
    DEFAULT_QUORUM,
    DEFAULT_TAU,
    DEFAULT_WINDOW,
)
from dualid.core.channels import SensorConfig
from dualid.core.identity import KAPPA_ROTOR, KAPPA_WING
from dualid.core.mapping import DEFAULT_SIM_MIN
from dualid.core.tracking import DEFAULT_Q, DEFAULT_SIGMA_V0, GateParams
from dualid.core.world import Role, WingType
from dualid.errors import ConfigError

logger = logging.getLogger(__name__)

SECTIONS = ("scenario", "nodes", "noise", "attack", "thresholds", "latency")

Triple = Tuple[float, float, float]


class ScenarioKind(str, Enum):
    BEAM_MANAGEMENT = "beam_management"
    EMERGENCY_ALERT = "emergency_alert"
    SYBIL_DETECTION = "sybil_detection"


class ScenarioSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    kind: ScenarioKind
    duration_s: float = Field(..., gt=0)
    dt_s: float = Field(0.01, gt=0)
    seed: int = Field(0, ge=0)
    layout: Optional[str] = None
    sender_id: Optional[int] = Field(
        None, description="Observer for beam management, sender for alerts"
    )
    warmup_s: float = Field(1.0, ge=0, description="Alerts and access events start after this")


class NodeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    node_id: int = Field(..., ge=0, lt=2**16)
    role: Role = Role.LEGITIMATE
    pos: Triple
    vel: Triple = (0.0, 0.0, 0.0)
    waypoints: Optional[List[Triple]] = None
    speed: Optional[float] = Field(None, gt=0)
    wing: WingType = WingType.ROTARY
    rotors: int = Field(4, ge=0)
    host: Optional[int] = None

    @model_validator(mode="after")
    def _waypoints_need_speed(self) -> "NodeSpec":
        if self.waypoints and self.speed is None:
            raise ValueError("waypoints require speed")
        return self


class Thresholds(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sim_min: float = Field(DEFAULT_SIM_MIN, gt=0, lt=1)
    mmse_tau: float = Field(DEFAULT_TAU, gt=0)
    mmse_window: int = Field(DEFAULT_WINDOW, ge=1)
    quorum: int = Field(DEFAULT_QUORUM, ge=1)
    body_gate_m: float = Field(BODY_GATE_M, gt=0)
    gate_radius_m: float = Field(10.0, gt=0)
    confirm_hits: int = Field(3, gt=0)
    delete_misses: int = Field(5, gt=0)
    process_noise_q: float = Field(DEFAULT_Q, ge=0)
    sigma_v0_mps: float = Field(DEFAULT_SIGMA_V0, gt=0)
    kappa_rotor: float = Field(KAPPA_ROTOR, gt=0, lt=1)
    kappa_wing: float = Field(KAPPA_WING, gt=0, lt=1)
    baseline_rho: float = Field(BASELINE_RHO, gt=-1, lt=1)
    baseline_window: int = Field(BASELINE_WINDOW, ge=3)
    baseline_distance_variance_m2: float = Field(BASELINE_DISTANCE_VARIANCE_M2, gt=0)

    def gate(self) -> GateParams:
        return GateParams(
            gate_radius_m=self.gate_radius_m,
            confirm_hits=self.confirm_hits,
            delete_misses=self.delete_misses,
        )


class LatencyConstants(BaseModel):
    """Latency building blocks in milliseconds, calibrated to measured deltas."""

    model_config = ConfigDict(extra="forbid")

    t_echo_ms: float = Field(1.0, ge=0)
    t_feedback_ms: float = Field(3.094, ge=0, description="Feedback delay at the reference distance")
    t_feedback_slope_ms_per_m: float = Field(0.0032, ge=0)
    reference_distance_m: float = Field(10.0, ge=0)
    t_report_ms: float = Field(1.5, ge=0)
    n_codebook: int = Field(8, ge=0)
    t_ssb_ms: float = Field(0.125, ge=0)
    t_hop_ms: float = Field(2.3, ge=0)
    t_confirm_ms: float = Field(2.9625, ge=0)
    t_jitter_ms: float = Field(0.5, ge=0)


class ScenarioConfig(BaseModel):
    """A fully resolved scenario."""

    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioSection
    nodes: List[NodeSpec] = Field(default_factory=list)
    noise: SensorConfig = Field(default_factory=SensorConfig)
    attack: Optional[AttackConfig] = None
    thresholds: Thresholds = Field(default_factory=Thresholds)
    latency: LatencyConstants = Field(default_factory=LatencyConstants)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ScenarioConfig":
        ids = [n.node_id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise ValueError("node ids must be unique")
        roles = {n.node_id: n.role for n in self.nodes}
        for node in self.nodes:
            if node.role == Role.SYBIL_PHANTOM:
                if node.host is None or roles.get(node.host) != Role.MALICIOUS:
                    raise ValueError(f"phantom {node.node_id} must name a malicious host")
            elif node.host is not None:
                raise ValueError(f"node {node.node_id}: only phantoms have a host")
        legit = [n for n in self.nodes if n.role == Role.LEGITIMATE]
        if len(legit) < 2:
            raise ValueError("a scenario needs at least two legitimate nodes")
        if self.attack is not None and Role.MALICIOUS not in roles.values():
            raise ValueError("an [attack] section needs a malicious node")
        sender = self.scenario.sender_id
        if sender is not None and roles.get(sender) != Role.LEGITIMATE:
            raise ValueError(f"sender_id {sender} is not a legitimate node")
        if self.noise.hop_latency_ms != self.latency.t_hop_ms:
            self.noise = self.noise.model_copy(update={"hop_latency_ms": self.latency.t_hop_ms})
        return self

    @property
    def n_epochs(self) -> int:
        return int(round(self.scenario.duration_s / self.scenario.dt_s))

    def legitimate_ids(self) -> List[int]:
        return sorted(n.node_id for n in self.nodes if n.role == Role.LEGITIMATE)

    def sender(self) -> int:
        if self.scenario.sender_id is not None:
            return self.scenario.sender_id
        return self.legitimate_ids()[0]


_SECTION_MODELS: Dict[str, type] = {
    "scenario": ScenarioSection,
    "noise": SensorConfig,
    "attack": AttackConfig,
    "thresholds": Thresholds,
    "latency": LatencyConstants,
}


def _format_errors(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{path}: {item['msg']}")
    return "; ".join(lines)


def _triple(text: str) -> List[float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected x,y,z but got {text!r}")
    return [float(p) for p in parts]


def parse_node_line(node_id: int, text: str) -> Dict[str, Any]:
    """Parse ``role=... pos=x,y,z ...`` into NodeSpec fields."""
    fields: Dict[str, Any] = {"node_id": node_id}
    for token in shlex.split(text):
        if "=" not in token:
            raise ValueError(f"expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        if key in ("pos", "vel"):
            fields[key] = _triple(value)
        elif key == "waypoints":
            fields[key] = [_triple(w) for w in value.split(";") if w.strip()]
        else:
            fields[key] = value
    return fields


def _node_entries(section: configparser.SectionProxy) -> Tuple[List[Dict[str, Any]], List[str]]:
    nodes, problems = [], []
    for key, value in section.items():
        if key == "layout":
            continue
        if not key.startswith("node."):
            problems.append(f"nodes.{key}: unknown key")
            continue
        try:
            nodes.append(parse_node_line(int(key.split(".", 1)[1]), value))
        except ValueError as exc:
            problems.append(f"nodes.{key}: {exc}")
    return nodes, problems


def config_from_mapping(raw: Dict[str, Any]) -> ScenarioConfig:
    """
    Validate a nested mapping, expanding a named layout first.

    Raises:
        ConfigError: listing every offending field as a dotted path
    """
    from dualid.scenarios.layouts import expand_layout

    try:
        expanded = expand_layout(raw)
        return ScenarioConfig.model_validate(expanded)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc))
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc))


def parse_config_text(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse INI text into a validated scenario config."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}")

    problems = [f"{name}: unknown section" for name in parser.sections() if name not in SECTIONS]
    raw: Dict[str, Any] = {}
    for name in SECTIONS:
        if not parser.has_section(name):
            continue
        if name == "nodes":
            nodes, node_problems = _node_entries(parser[name])
            problems.extend(node_problems)
            raw["nodes"] = nodes
            if "layout" in parser[name]:
                raw.setdefault("scenario", {})["layout"] = parser[name]["layout"]
        else:
            raw.setdefault(name, {}).update(dict(parser[name]))
    if problems:
        raise ConfigError("; ".join(problems))
    return config_from_mapping(raw)


def load_config(path: Path) -> ScenarioConfig:
    """
    Read and validate a scenario file.

    Args:
        path: INI file

    Returns:
        Validated config
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}")
    config = parse_config_text(text, source=str(path))
    logger.debug("loaded %s: %s, %d nodes", path, config.scenario.kind.value, len(config.nodes))
    return config


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return format(value, ".9g")
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def _node_line(node: NodeSpec) -> str:
    parts = [
        f"role={node.role.value}",
        f"pos={_format_value(node.pos)}",
        f"vel={_format_value(node.vel)}",
        f"wing={node.wing.value}",
        f"rotors={node.rotors}",
    ]
    if node.waypoints:
        parts.append("waypoints=" + ";".join(_format_value(w) for w in node.waypoints))
        parts.append(f"speed={_format_value(node.speed)}")
    if node.host is not None:
        parts.append(f"host={node.host}")
    return " ".join(parts)


def to_ini(config: ScenarioConfig) -> configparser.ConfigParser:
    """The fully resolved config as INI sections, layouts already expanded."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    blocks: Dict[str, Optional[BaseModel]] = {
        "scenario": config.scenario,
        "noise": config.noise,
        "attack": config.attack,
        "thresholds": config.thresholds,
        "latency": config.latency,
    }
    for name in SECTIONS:
        if name == "nodes":
            parser[name] = {f"node.{n.node_id}": _node_line(n) for n in config.nodes}
            continue
        block = blocks[name]
        if block is None:
            continue
        values = block.model_dump(exclude={"layout"} if name == "scenario" else None)
        parser[name] = {k: _format_value(v) for k, v in values.items() if v is not None}
    return parser


def apply_override(config: ScenarioConfig, dotted_key: str, value: Any) -> ScenarioConfig:
    """
    Return a copy of ``config`` with one field replaced and revalidated.

    Args:
        config: Base config
        dotted_key: ``section.field``, e.g. ``attack.claim_offset_m``
        value: New value
    """
    section, _, name = dotted_key.partition(".")
    model = _SECTION_MODELS.get(section)
    if model is None or not name:
        raise ConfigError(f"{dotted_key}: cannot vary this key")
    if name not in model.model_fields:
        raise ConfigError(f"{dotted_key}: unknown key")
    raw = config.model_dump(mode="json")
    block = raw.get(section) or {}
    block[name] = value
    raw[section] = block
    raw["scenario"]["layout"] = None
    return config_from_mapping(raw)
