"""Tab extraction: cut the offloadable tab out of a flow and splice in an offload-link node."""
import logging
from dataclasses import dataclass
from typing import Tuple

from flow.graph import FlowGraph, FlowNode, FlowSemanticError, Wire, validate
from utils.constants import OFFLOAD_LINK_SUFFIX
from utils.helpers import EdgeflowError

logger = logging.getLogger(__name__)


class RewriteError(EdgeflowError):
    def __init__(self, code, detail=""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


@dataclass(frozen=True)
class RewriteResult:
    local_flow: FlowGraph
    remote_flow: FlowGraph
    offload_link_id: str


def entry_and_exit(flow: FlowGraph, tab_id) -> Tuple[FlowNode, FlowNode]:
    """The single link-in and link-out of a tab, or RewriteError naming what is wrong"""
    nodes = flow.nodes_in_tab(tab_id)
    entries = [n for n in nodes if n.kind == "link-in"]
    exits = [n for n in nodes if n.kind == "link-out"]
    if not entries:
        raise RewriteError("NoEntry", f"tab '{tab_id}' has no link-in node")
    if len(entries) > 1:
        raise RewriteError("MultipleEntries", ", ".join(n.id for n in entries))
    if not exits:
        raise RewriteError("NoExit", f"tab '{tab_id}' has no link-out node")
    if len(exits) > 1:
        raise RewriteError("MultipleExits", ", ".join(n.id for n in exits))
    return entries[0], exits[0]


def extract_offloadable(flow: FlowGraph, remote_url, policy_spec) -> RewriteResult:
    """Split a flow into the local part (with an offload-link) and the extracted remote part"""
    violations = validate(flow)
    if violations:
        raise FlowSemanticError(violations)

    offloadable = flow.offloadable_tabs()
    if not offloadable:
        raise RewriteError("NoOffloadableTab")
    tab = offloadable[0]
    entry, exit_node = entry_and_exit(flow, tab.id)

    inside = {n.id for n in flow.nodes_in_tab(tab.id)}
    callers = [w.source for w in flow.wires if w.target == entry.id and w.source not in inside]
    targets = [w.target for w in flow.wires if w.source == exit_node.id and w.target not in inside]
    if any(w.source == exit_node.id and w.target in inside for w in flow.wires):
        raise RewriteError("CrossTabLinks", f"exit '{exit_node.id}' links back into its own tab")
    if not callers:
        raise RewriteError("NoEntry", f"link-in '{entry.id}' has no callers")

    main_tabs = {flow.node(node_id).tab for node_id in callers + targets}
    if len(main_tabs) > 1:
        raise RewriteError("CrossTabLinks", f"tab '{tab.id}' links to tabs {sorted(main_tabs)}")
    main_tab = main_tabs.pop()

    olink_id = f"{tab.id}{OFFLOAD_LINK_SUFFIX}"
    if flow.node(olink_id) is not None:
        raise RewriteError("IdCollision", f"node '{olink_id}' already exists")
    olink = FlowNode(olink_id, main_tab, "offload-link",
                     {"policy": policy_spec, "remote_url": remote_url, "flow_id": tab.id})

    local_wires = []
    remote_wires = []
    for wire in flow.wires:
        if wire.source in inside and wire.target in inside:
            remote_wires.append(wire)
        elif wire.target == entry.id:
            local_wires.append(Wire(wire.source, olink_id))
        elif wire.source == exit_node.id:
            local_wires.append(Wire(olink_id, wire.target))
        else:
            local_wires.append(wire)

    local_flow = FlowGraph(
        tuple(t for t in flow.tabs if t.id != tab.id),
        tuple(n for n in flow.nodes if n.id not in inside) + (olink,),
        tuple(local_wires),
    )
    remote_flow = FlowGraph(
        (tab,),
        tuple(n for n in flow.nodes if n.id in inside),
        tuple(remote_wires),
    )
    logger.info("extracted tab '%s' (%d nodes) behind offload-link '%s'", tab.id, len(remote_flow.nodes), olink_id)
    return RewriteResult(local_flow, remote_flow, olink_id)
