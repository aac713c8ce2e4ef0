"""Heterogeneous program graphs built from parsed IR modules.

Node kinds: instruction, variable, constant. Edge relations: control,
data, call. Every edge carries an integer position: operand index for
data edges into an instruction, successor index for branch edges,
0 otherwise.
"""

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import CorruptPayload, EmptyModule, VersionMismatch
from .parser import IrModule, terminator_successors
from .util import canonical_json

MAGIC = "PGRAPH1"

KIND_INSTRUCTION = "instruction"
KIND_VARIABLE = "variable"
KIND_CONSTANT = "constant"

REL_CONTROL = "control"
REL_DATA = "data"
REL_CALL = "call"
RELATIONS = (REL_CONTROL, REL_DATA, REL_CALL)


@dataclass
class GraphNode:
    id: int
    kind: str
    text: str
    full_text: str


@dataclass
class GraphEdge:
    src: int
    dst: int
    relation: str
    position: int


@dataclass
class ProgramGraph:
    nodes: List[GraphNode] = field(default_factory=list)
    edges: List[GraphEdge] = field(default_factory=list)
    origin: str = ""
    language: str = ""
    source_path: Optional[str] = field(default=None, compare=False)


def build_graph(module: IrModule, origin: str = "", language: str = "") -> ProgramGraph:
    """Deterministic construction: instruction nodes in module traversal
    order, then variable/constant nodes in first-use order. Variables are
    scoped per function; constants are shared module-wide by token text."""
    functions = module.defined_functions()
    if not functions:
        raise EmptyModule(module.source_path or "<module>")

    graph = ProgramGraph(origin=origin, language=language,
                         source_path=module.source_path)

    def add_node(kind: str, text: str, full_text: str) -> int:
        node = GraphNode(id=len(graph.nodes), kind=kind, text=text,
                         full_text=full_text)
        graph.nodes.append(node)
        return node.id

    # result/parameter types drive variable node text
    var_types: Dict[Tuple[str, str], str] = {}
    for fn in functions:
        for p, t in zip(fn.params, fn.param_types):
            var_types[(fn.name, p)] = t
        for block in fn.blocks:
            for instr in block.instructions:
                if instr.result:
                    var_types[(fn.name, instr.result)] = instr.result_type

    # instruction nodes, traversal order; remember per-function layout
    instr_ids: Dict[Tuple[str, str, int], int] = {}
    defined: Dict[str, "object"] = {fn.name: fn for fn in functions}
    for fn in functions:
        for block in fn.blocks:
            for idx, instr in enumerate(block.instructions):
                nid = add_node(KIND_INSTRUCTION, instr.opcode, instr.full_text)
                instr_ids[(fn.name, block.label, idx)] = nid

    def resolve(fn, label: str):
        """First nonempty block at or after the labeled one; None if the
        label is unknown or nothing executable follows."""
        labels = [b.label for b in fn.blocks]
        if label not in labels:
            return None
        for b in fn.blocks[labels.index(label):]:
            if b.instructions:
                return b
        return None

    # control edges
    for fn in functions:
        nonempty = [b for b in fn.blocks if b.instructions]
        for bi, block in enumerate(nonempty):
            for idx in range(len(block.instructions) - 1):
                graph.edges.append(GraphEdge(
                    instr_ids[(fn.name, block.label, idx)],
                    instr_ids[(fn.name, block.label, idx + 1)],
                    REL_CONTROL, 0))
            last_idx = len(block.instructions) - 1
            last = block.instructions[last_idx]
            src = instr_ids[(fn.name, block.label, last_idx)]
            if last.is_terminator:
                for si, lbl in enumerate(terminator_successors(last)):
                    target = resolve(fn, lbl)
                    if target is not None:
                        graph.edges.append(GraphEdge(
                            src, instr_ids[(fn.name, target.label, 0)],
                            REL_CONTROL, si))
            elif bi + 1 < len(nonempty):
                nxt = nonempty[bi + 1]
                graph.edges.append(GraphEdge(
                    src, instr_ids[(fn.name, nxt.label, 0)], REL_CONTROL, 0))

    # data edges; variable/constant nodes created on first touch
    var_ids: Dict[Tuple[str, str], int] = {}
    const_ids: Dict[str, int] = {}

    def var_node(fn_name: str, ssa: str) -> int:
        key = (fn_name, ssa)
        if key not in var_ids:
            var_ids[key] = add_node(
                KIND_VARIABLE, var_types.get(key, "var"),
                var_types.get(key, "var"))
        return var_ids[key]

    def const_node(token: str) -> int:
        if token not in const_ids:
            const_ids[token] = add_node(KIND_CONSTANT, token, token)
        return const_ids[token]

    for fn in functions:
        for block in fn.blocks:
            for idx, instr in enumerate(block.instructions):
                nid = instr_ids[(fn.name, block.label, idx)]
                for op in instr.operands:
                    if op.is_id and op.text.startswith("%"):
                        src = var_node(fn.name, op.text)
                    else:
                        src = const_node(op.text)
                    graph.edges.append(GraphEdge(src, nid, REL_DATA, op.position))
                if instr.result:
                    dst = var_node(fn.name, instr.result)
                    graph.edges.append(GraphEdge(nid, dst, REL_DATA, 0))

    # call edges; one per call site
    external_id: Optional[int] = None
    for fn in functions:
        for block in fn.blocks:
            for idx, instr in enumerate(block.instructions):
                if instr.opcode not in ("call", "invoke"):
                    continue
                nid = instr_ids[(fn.name, block.label, idx)]
                target = None
                callee = instr.callee
                if callee and callee.startswith("@") and callee in defined:
                    entry = next(
                        (b for b in defined[callee].blocks if b.instructions),
                        None)
                    if entry is not None:
                        target = instr_ids[(callee, entry.label, 0)]
                if target is None:
                    if external_id is None:
                        external_id = add_node(
                            KIND_INSTRUCTION, "external", "external")
                    target = external_id
                graph.edges.append(GraphEdge(nid, target, REL_CALL, 0))

    return graph


def graph_stats(graph: ProgramGraph) -> Dict[str, int]:
    kinds = Counter(n.kind for n in graph.nodes)
    rels = Counter(e.relation for e in graph.edges)
    return {
        "n_nodes": len(graph.nodes),
        "n_edges": len(graph.edges),
        "instruction_nodes": kinds.get(KIND_INSTRUCTION, 0),
        "variable_nodes": kinds.get(KIND_VARIABLE, 0),
        "constant_nodes": kinds.get(KIND_CONSTANT, 0),
        "control_edges": rels.get(REL_CONTROL, 0),
        "data_edges": rels.get(REL_DATA, 0),
        "call_edges": rels.get(REL_CALL, 0),
    }


def serialize_graph(graph: ProgramGraph) -> str:
    payload = {
        "version": 1,
        "origin": graph.origin,
        "language": graph.language,
        "source_path": graph.source_path,
        "nodes": [
            {"id": n.id, "kind": n.kind, "text": n.text, "full_text": n.full_text}
            for n in graph.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "relation": e.relation,
             "position": e.position}
            for e in graph.edges
        ],
    }
    return MAGIC + "\n" + canonical_json(payload)


def deserialize_graph(text: str) -> ProgramGraph:
    line, _, body = text.partition("\n")
    if line.strip() != MAGIC:
        raise CorruptPayload("bad magic: %r" % line[:16])
    import json
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise CorruptPayload(str(exc)) from exc
    if payload.get("version") != 1:
        raise VersionMismatch("graph version %r" % payload.get("version"))
    try:
        graph = ProgramGraph(
            origin=payload["origin"], language=payload["language"],
            source_path=payload.get("source_path"))
        for nd in payload["nodes"]:
            graph.nodes.append(GraphNode(
                id=nd["id"], kind=nd["kind"], text=nd["text"],
                full_text=nd["full_text"]))
        for ed in payload["edges"]:
            graph.edges.append(GraphEdge(
                src=ed["src"], dst=ed["dst"], relation=ed["relation"],
                position=ed["position"]))
    except (KeyError, TypeError) as exc:
        raise CorruptPayload("missing graph field: %s" % exc) from exc
    return graph


def save_graph(graph: ProgramGraph, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_graph(graph))


def load_graph(path: str) -> ProgramGraph:
    with open(path, encoding="utf-8") as fh:
        return deserialize_graph(fh.read())
