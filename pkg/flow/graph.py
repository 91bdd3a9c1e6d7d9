"""Flow graphs: tabs, nodes and wires, plus the flow document codec and validation.

A flow document is a JSON object with exactly the fields ``tabs``, ``nodes`` and
``wires``. Link connections are ordinary wires from a ``link-out`` node to a
``link-in`` node and are the only wires allowed to cross tabs. A ``link-out``
without outgoing wires is a flow exit.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from policy.spec import PolicyError, parse_policy
from utils.constants import FLOW_FIELDS, NODE_FIELDS, TAB_FIELDS, WIRE_FIELDS
from utils.helpers import EdgeflowError

logger = logging.getLogger(__name__)


class FlowSyntaxError(EdgeflowError):
    """The document is not well-formed (bad JSON, wrong field set or types)"""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at char {position})"
        super().__init__(message)


class FlowSemanticError(EdgeflowError):
    """The document parsed but the graph breaks an invariant"""

    def __init__(self, violations):
        self.violations = list(violations)
        names = ", ".join(str(v) for v in self.violations)
        super().__init__(f"invalid flow: {names}")


@dataclass(frozen=True)
class Violation:
    code: str
    id: Optional[str] = None
    detail: str = ""

    def to_dict(self):
        return {"code": self.code, "id": self.id, "detail": self.detail}

    def __str__(self):
        return f"{self.code}({self.id})" if self.id is not None else self.code


@dataclass(frozen=True)
class Tab:
    id: str
    name: str = ""
    offloadable: bool = False


@dataclass(frozen=True)
class FlowNode:
    id: str
    tab: str
    kind: str
    config: Dict[str, str] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class Wire:
    source: str
    target: str


@dataclass(frozen=True)
class FlowGraph:
    tabs: Tuple[Tab, ...] = ()
    nodes: Tuple[FlowNode, ...] = ()
    wires: Tuple[Wire, ...] = ()

    def node(self, node_id) -> Optional[FlowNode]:
        for node in self.nodes:
            if node.id == node_id:
                return node
        return None

    def tab(self, tab_id) -> Optional[Tab]:
        for tab in self.tabs:
            if tab.id == tab_id:
                return tab
        return None

    def nodes_in_tab(self, tab_id) -> List[FlowNode]:
        return [node for node in self.nodes if node.tab == tab_id]

    def successors(self, node_id) -> List[str]:
        """Wire targets of a node, in document order"""
        return [wire.target for wire in self.wires if wire.source == node_id]

    def predecessors(self, node_id) -> List[str]:
        return [wire.source for wire in self.wires if wire.target == node_id]

    def offloadable_tabs(self) -> List[Tab]:
        return [tab for tab in self.tabs if tab.offloadable]

    def kinds(self) -> List[str]:
        seen = []
        for node in self.nodes:
            if node.kind not in seen:
                seen.append(node.kind)
        return seen


def _require_object(value, fields, where, required):
    if not isinstance(value, dict):
        raise FlowSyntaxError(f"{where} must be an object")
    unknown = [key for key in value if key not in fields]
    if unknown:
        raise FlowSyntaxError(f"unknown field '{unknown[0]}' in {where}")
    missing = [key for key in required if key not in value]
    if missing:
        raise FlowSyntaxError(f"missing field '{missing[0]}' in {where}")


def _require_string(value, where):
    if not isinstance(value, str):
        raise FlowSyntaxError(f"{where} must be a string")
    return value


def _load_document(text) -> FlowGraph:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FlowSyntaxError(f"malformed flow document: {e.msg} at line {e.lineno} column {e.colno}", e.pos)

    _require_object(data, FLOW_FIELDS, "flow document", FLOW_FIELDS)
    for key in FLOW_FIELDS:
        if not isinstance(data[key], list):
            raise FlowSyntaxError(f"'{key}' must be an array")

    tabs = []
    for i, raw in enumerate(data["tabs"]):
        where = f"tabs[{i}]"
        _require_object(raw, TAB_FIELDS, where, ("id",))
        offloadable = raw.get("offloadable", False)
        if not isinstance(offloadable, bool):
            raise FlowSyntaxError(f"{where}.offloadable must be a boolean")
        tabs.append(Tab(_require_string(raw["id"], f"{where}.id"),
                        _require_string(raw.get("name", ""), f"{where}.name"),
                        offloadable))

    nodes = []
    for i, raw in enumerate(data["nodes"]):
        where = f"nodes[{i}]"
        _require_object(raw, NODE_FIELDS, where, ("id", "tab", "kind"))
        config = raw.get("config", {})
        if not isinstance(config, dict):
            raise FlowSyntaxError(f"{where}.config must be an object")
        for key, value in config.items():
            _require_string(value, f"{where}.config.{key}")
        nodes.append(FlowNode(_require_string(raw["id"], f"{where}.id"),
                              _require_string(raw["tab"], f"{where}.tab"),
                              _require_string(raw["kind"], f"{where}.kind"),
                              dict(config)))

    wires = []
    for i, raw in enumerate(data["wires"]):
        where = f"wires[{i}]"
        _require_object(raw, WIRE_FIELDS, where, WIRE_FIELDS)
        wires.append(Wire(_require_string(raw["from"], f"{where}.from"),
                          _require_string(raw["to"], f"{where}.to")))

    return FlowGraph(tuple(tabs), tuple(nodes), tuple(wires))


def parse_flow(text) -> FlowGraph:
    """Parse a flow document and reject graphs that break an invariant"""
    flow = _load_document(text)
    violations = validate(flow)
    if violations:
        raise FlowSemanticError(violations)
    logger.debug("parsed flow with %d tabs, %d nodes, %d wires", len(flow.tabs), len(flow.nodes), len(flow.wires))
    return flow


def load_flow(path) -> FlowGraph:
    with open(path, encoding="utf-8") as handle:
        return parse_flow(handle.read())


def flow_to_dict(flow: FlowGraph) -> dict:
    return {
        "tabs": [{"id": t.id, "name": t.name, "offloadable": t.offloadable} for t in flow.tabs],
        "nodes": [{"id": n.id, "tab": n.tab, "kind": n.kind, "config": dict(n.config)} for n in flow.nodes],
        "wires": [{"from": w.source, "to": w.target} for w in flow.wires],
    }


def serialize_flow(flow: FlowGraph) -> str:
    return json.dumps(flow_to_dict(flow), indent=2, ensure_ascii=False) + "\n"


def _config_violations(node: FlowNode) -> List[Violation]:
    found = []
    if node.kind == "work":
        units = node.config.get("work_units")
        if units is None:
            found.append(Violation("MissingConfig", node.id, "work_units"))
        elif not (units.isascii() and units.isdigit()) or int(units) <= 0:
            found.append(Violation("InvalidConfig", node.id, f"work_units must be a positive integer, got '{units}'"))
    elif node.kind == "change":
        if "key" not in node.config:
            found.append(Violation("MissingConfig", node.id, "key"))
    elif node.kind == "offload-link":
        for key in ("policy", "remote_url", "flow_id"):
            if key not in node.config:
                found.append(Violation("MissingConfig", node.id, key))
        if "policy" in node.config:
            try:
                parse_policy(node.config["policy"])
            except PolicyError as e:
                found.append(Violation("InvalidConfig", node.id, str(e)))
    return found


def validate(flow: FlowGraph) -> List[Violation]:
    """Return every invariant violation in the graph; an empty list means valid"""
    violations = []

    tab_ids = set()
    for tab in flow.tabs:
        if tab.id in tab_ids:
            violations.append(Violation("DuplicateTabId", tab.id))
        tab_ids.add(tab.id)

    if len(flow.offloadable_tabs()) > 1:
        ids = ", ".join(t.id for t in flow.offloadable_tabs())
        violations.append(Violation("MultipleOffloadableTabs", None, ids))

    nodes_by_id = {}
    for node in flow.nodes:
        if node.id in nodes_by_id:
            violations.append(Violation("DuplicateId", node.id))
            continue
        nodes_by_id[node.id] = node
        if node.tab not in tab_ids:
            violations.append(Violation("UnknownTab", node.id, f"tab '{node.tab}' does not exist"))
        violations.extend(_config_violations(node))

    for wire in flow.wires:
        source = nodes_by_id.get(wire.source)
        target = nodes_by_id.get(wire.target)
        if source is None:
            violations.append(Violation("DanglingWire", wire.source, f"wire {wire.source} -> {wire.target}"))
        if target is None:
            violations.append(Violation("DanglingWire", wire.target, f"wire {wire.source} -> {wire.target}"))
        if source is None or target is None:
            continue
        if wire.source == wire.target:
            violations.append(Violation("SelfLoop", wire.source))
            continue
        # link-out may only feed a link-in (or the offload-link standing in for one)
        if source.kind == "link-out" and target.kind not in ("link-in", "offload-link"):
            violations.append(Violation("LinkTargetKind", source.id, f"link-out wired to {target.kind} '{target.id}'"))
        elif target.kind == "link-in" and source.kind not in ("link-out", "offload-link"):
            violations.append(Violation("LinkTargetKind", source.id, f"{source.kind} wired to link-in '{target.id}'"))
        elif source.tab != target.tab and not (source.kind == "link-out" and target.kind == "link-in"):
            violations.append(Violation("CrossTabWire", source.id, f"wire {source.id} -> {target.id} crosses tabs"))

    return violations
