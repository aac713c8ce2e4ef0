import glob
import os
from collections import Counter

import pytest

import oracle_graph as oracle
from irmatch.errors import CorruptPayload, EmptyModule, VersionMismatch
from irmatch.graph import (
    build_graph,
    deserialize_graph,
    graph_stats,
    load_graph,
    save_graph,
    serialize_graph,
)
from irmatch.parser import parse_module

FIXTURES = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "fixtures", "*.ll")))


def read(path):
    with open(path) as fh:
        return fh.read()


def label_nodes(module, graph):
    """Assign every graph node a parse-tree key; fails on any mismatch."""
    order = oracle.instruction_order(module)
    instr_nodes = [n for n in graph.nodes
                   if n.kind == "instruction" and n.full_text != "external"]
    assert len(instr_nodes) == len(order), "instruction node count"
    id2key = {}
    key2ins = {}
    for node, (key, ins) in zip(instr_nodes, order):
        assert node.full_text == ins.full_text
        assert node.text == ins.opcode
        id2key[node.id] = key
        key2ins[key] = ins

    labels = {}

    def put(nid, label):
        assert labels.get(nid, label) == label, "node labeled twice differently"
        labels[nid] = label

    for e in graph.edges:
        if e.relation != "data":
            continue
        if e.src in id2key:
            ins = key2ins[id2key[e.src]]
            assert ins.result is not None and e.position == 0
            put(e.dst, ("var", id2key[e.src][0], ins.result))
        else:
            key = id2key[e.dst]
            ins = key2ins[key]
            ops = [op for op in ins.operands if op.position == e.position]
            assert len(ops) == 1, "data edge position matches one operand"
            put(e.src, oracle._value_label(key[0], ops[0]))

    # one node per value: labels must be unique
    assert len(set(labels.values())) == len(labels)
    for n in graph.nodes:
        if n.kind == "instruction":
            continue
        assert n.id in labels, "variable/constant node without a data edge"
        want_kind = "variable" if labels[n.id][0] == "var" else "constant"
        assert n.kind == want_kind
    return id2key, labels


def graph_edge_counters(module, graph):
    id2key, labels = label_nodes(module, graph)
    ext = {n.id for n in graph.nodes if n.full_text == "external"}

    def name(nid):
        if nid in id2key:
            return id2key[nid]
        if nid in ext:
            return "external"
        return labels[nid]

    out = {"control": Counter(), "data": Counter(), "call": Counter()}
    for e in graph.edges:
        out[e.relation][(name(e.src), name(e.dst), e.position)] += 1
    return out


@pytest.mark.parametrize("path", FIXTURES, ids=[os.path.basename(p) for p in FIXTURES])
def test_fixture_matches_bruteforce_oracles(path):
    module = parse_module(read(path), source_path=path)
    graph = build_graph(module, origin="source", language="cpp")
    got = graph_edge_counters(module, graph)
    assert got["control"] == oracle.expected_control(module)
    assert got["data"] == oracle.expected_data(module)
    assert got["call"] == oracle.expected_calls(module)


@pytest.mark.parametrize("path", FIXTURES, ids=[os.path.basename(p) for p in FIXTURES])
def test_fixture_invariants(path):
    graph = build_graph(parse_module(read(path)))
    assert [n.id for n in graph.nodes] == list(range(len(graph.nodes)))
    n = len(graph.nodes)
    for e in graph.edges:
        assert 0 <= e.src < n and 0 <= e.dst < n
        assert e.position >= 0
        assert e.relation in ("control", "data", "call")
    for node in graph.nodes:
        assert node.kind in ("instruction", "variable", "constant")
        if node.kind == "instruction":
            assert node.full_text


def test_hand_counted_straightline():
    path = os.path.join(os.path.dirname(__file__), "fixtures", "straightline.ll")
    stats = graph_stats(build_graph(parse_module(read(path))))
    assert stats == {
        "n_nodes": 10, "n_edges": 13,
        "instruction_nodes": 5, "variable_nodes": 3, "constant_nodes": 2,
        "control_edges": 4, "data_edges": 9, "call_edges": 0,
    }


def test_hand_counted_branch():
    path = os.path.join(os.path.dirname(__file__), "fixtures", "branch.ll")
    stats = graph_stats(build_graph(parse_module(read(path))))
    assert stats == {
        "n_nodes": 12, "n_edges": 18,
        "instruction_nodes": 7, "variable_nodes": 4, "constant_nodes": 1,
        "control_edges": 7, "data_edges": 11, "call_edges": 0,
    }


def test_direct_call_edge_reaches_callee_entry():
    path = os.path.join(os.path.dirname(__file__), "fixtures", "calls.ll")
    module = parse_module(read(path))
    graph = build_graph(module)
    got = graph_edge_counters(module, graph)["call"]
    assert got[(("@main", "entry", 0), ("@square", "entry", 0), 0)] == 1
    assert got[(("@main", "entry", 1), "external", 0)] == 1
    assert sum(got.values()) == 2


def test_recursion_call_edge_targets_own_entry():
    path = os.path.join(os.path.dirname(__file__), "fixtures", "recursion.ll")
    module = parse_module(read(path))
    got = graph_edge_counters(module, build_graph(module))["call"]
    assert got[(("@fact", "recur", 1), ("@fact", "entry", 0), 0)] == 1


def test_constant_dedup_across_functions():
    path = os.path.join(os.path.dirname(__file__), "fixtures", "globals.ll")
    graph = build_graph(parse_module(read(path)))
    counters = [n for n in graph.nodes if n.kind == "constant" and n.text == "@counter"]
    assert len(counters) == 1
    uses = [e for e in graph.edges if e.src == counters[0].id and e.relation == "data"]
    assert len(uses) == 3


def test_variables_are_function_scoped():
    text = ("define i32 @a() {\nentry:\n  %v = add i32 1, 2\n  ret i32 %v\n}\n"
            "define i32 @b() {\nentry:\n  %v = add i32 3, 4\n  ret i32 %v\n}\n")
    graph = build_graph(parse_module(text))
    assert sum(1 for n in graph.nodes if n.kind == "variable") == 2


def test_empty_module_raises():
    with pytest.raises(EmptyModule):
        build_graph(parse_module("declare void @f()\n"))


def test_origin_language_carried():
    g = build_graph(parse_module("define void @f() {\nentry:\n  ret void\n}\n"),
                    origin="binary", language="java")
    assert g.origin == "binary" and g.language == "java"


def test_serialize_round_trip(tmp_path):
    path = os.path.join(os.path.dirname(__file__), "fixtures", "loop.ll")
    graph = build_graph(parse_module(read(path), source_path="loop.ll"),
                        origin="source", language="cpp")
    out = tmp_path / "loop.pgraph"
    save_graph(graph, str(out))
    again = load_graph(str(out))
    assert again == graph  # source_path excluded from equality
    assert again.source_path == "loop.ll"


def test_serialized_header_and_determinism():
    g = build_graph(parse_module("define void @f() {\nentry:\n  ret void\n}\n"))
    text = serialize_graph(g)
    assert text.startswith("PGRAPH1\n")
    assert serialize_graph(deserialize_graph(text)) == text


def test_bad_magic_rejected():
    with pytest.raises(CorruptPayload):
        deserialize_graph("NOTAGRAPH\n{}")


def test_bad_version_rejected():
    g = build_graph(parse_module("define void @f() {\nentry:\n  ret void\n}\n"))
    text = serialize_graph(g).replace('"version":1', '"version":9')
    with pytest.raises(VersionMismatch):
        deserialize_graph(text)


def test_truncated_payload_rejected():
    g = build_graph(parse_module("define void @f() {\nentry:\n  ret void\n}\n"))
    with pytest.raises(CorruptPayload):
        deserialize_graph(serialize_graph(g)[:40])
