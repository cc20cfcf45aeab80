"""
Named node layouts for DUALID scenarios.

A config may say ``layout = <name>`` instead of listing every node. Explicit
``node.<id>`` entries override layout nodes with the same id. When an attack
is configured, phantom nodes are added on the malicious host until it
carries ``n_sybil`` of them.
"""

import copy
from typing import Any, Dict, List

from dualid.core.world import Role

NodeFields = Dict[str, Any]


def _node(node_id: int, role: str, pos, vel=(0.0, 0.0, 0.0), **extra) -> NodeFields:
    return {"node_id": node_id, "role": role, "pos": list(pos), "vel": list(vel), **extra}


LAYOUTS: Dict[str, List[NodeFields]] = {
    # four legitimate UAVs around one malicious node
    "sybil_cluster": [
        _node(1, "legitimate", (0.0, 0.0, 100.0), (6.0, 2.0, 0.0)),
        _node(2, "legitimate", (120.0, 0.0, 100.0), (-5.0, 4.0, 0.0)),
        _node(3, "legitimate", (0.0, 120.0, 110.0), (5.0, -6.0, 0.0)),
        _node(4, "legitimate", (120.0, 120.0, 90.0), (-6.0, -5.0, 0.0)),
        _node(5, "malicious", (60.0, 60.0, 100.0), (3.0, -2.0, 0.0)),
    ],
    # certifiers 1 and 2 see the attacker; 3 hears it but is out of sensing range
    "relay": [
        _node(1, "legitimate", (250.0, 0.0, 100.0), (0.0, 1.0, 0.0)),
        _node(2, "legitimate", (200.0, 150.0, 100.0), (0.0, -1.0, 0.0)),
        _node(3, "legitimate", (330.0, 150.0, 100.0)),
        _node(5, "malicious", (0.0, 0.0, 100.0), (1.0, 0.0, 0.0)),
    ],
    # stationary observer, target crossing at 100 m
    "crossing": [
        _node(1, "legitimate", (0.0, 0.0, 100.0)),
        _node(2, "legitimate", (100.0, -30.0, 100.0), (0.0, 20.0, 0.0)),
        _node(3, "legitimate", (-80.0, 40.0, 120.0), (3.0, 0.0, 0.0), rotors=6),
    ],
    # sender 1; 3 is nearest but receding, 2 is the nearest approaching
    "swift_alert": [
        _node(1, "legitimate", (0.0, 0.0, 100.0)),
        _node(2, "legitimate", (30.0, 0.0, 100.0), (-3.0, 0.0, 0.0)),
        _node(3, "legitimate", (0.0, -25.0, 100.0), (0.0, -3.0, 0.0)),
        _node(4, "legitimate", (0.0, 60.0, 100.0), (0.0, -3.0, 0.0), rotors=6),
    ],
}


def _role(node: NodeFields) -> str:
    role = node.get("role", Role.LEGITIMATE.value)
    return role.value if isinstance(role, Role) else str(role)


def _add_phantoms(nodes: List[NodeFields], attack: Dict[str, Any]) -> List[NodeFields]:
    try:
        wanted = int(attack.get("n_sybil", 3))
        host_id = attack.get("host_id")
        host_id = int(host_id) if host_id not in (None, "") else None
    except (TypeError, ValueError):
        return nodes
    hosts = [int(n["node_id"]) for n in nodes if _role(n) == Role.MALICIOUS.value]
    if host_id is None:
        if not hosts:
            return nodes
        host_id = min(hosts)
    host = next((n for n in nodes if int(n["node_id"]) == host_id), None)
    if host is None:
        return nodes
    present = sum(
        1
        for n in nodes
        if _role(n) == Role.SYBIL_PHANTOM.value and str(n.get("host")) == str(host_id)
    )
    next_id = max(int(n["node_id"]) for n in nodes) + 1
    for _ in range(max(0, wanted - present)):
        nodes.append(
            _node(
                next_id,
                Role.SYBIL_PHANTOM.value,
                host["pos"],
                host.get("vel", (0.0, 0.0, 0.0)),
                host=host_id,
            )
        )
        next_id += 1
    return nodes


def expand_layout(raw: Dict[str, Any]) -> Dict[str, Any]:
    """
    Resolve the layout reference and phantom nodes of a raw config mapping.

    Args:
        raw: Nested mapping as read from the INI file

    Returns:
        A new mapping whose ``nodes`` list is complete
    """
    resolved = copy.deepcopy(raw)
    scenario = resolved.setdefault("scenario", {})
    layout = scenario.get("layout")
    explicit = resolved.get("nodes") or []
    nodes: Dict[int, NodeFields] = {}
    if layout:
        if layout not in LAYOUTS:
            raise ValueError(
                f"scenario.layout: unknown layout {layout!r} (known: {', '.join(sorted(LAYOUTS))})"
            )
        nodes.update({n["node_id"]: copy.deepcopy(n) for n in LAYOUTS[layout]})
    for node in explicit:
        nodes[int(node["node_id"])] = node
    ordered = [nodes[k] for k in sorted(nodes)]
    if resolved.get("attack") is not None:
        ordered = _add_phantoms(ordered, resolved["attack"])
    resolved["nodes"] = ordered
    return resolved
