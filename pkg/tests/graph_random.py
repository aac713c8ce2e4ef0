"""Random graph builders and relabeling helpers shared by tests."""

import numpy as np

from irmatch.graph import GraphEdge, GraphNode, ProgramGraph
from irmatch.tokenizer import train_vocabulary

TEXT_POOL = [
    "%a = add i32 %b, %c",
    "store i32 %v, i32* %p, align 4",
    "%x = load i32, i32* %p, align 4",
    "br i1 %c, label %t, label %f",
    "ret i32 0",
    "%m = mul nsw i32 %a, %b",
    "%cmp = icmp slt i32 %i, 10",
    "call void @helper(i32 %a)",
    "external",
]
SHORT_POOL = ["add", "store", "load", "br", "ret", "mul", "icmp", "call",
              "i32", "i1", "var", "0", "42", "external"]
KINDS = ["instruction", "variable", "constant"]


def shared_vocab(feature_mode="full_text"):
    return train_vocabulary(TEXT_POOL * 3 + SHORT_POOL * 3,
                            vocab_size=256, feature_mode=feature_mode)


def random_graph(rng: np.random.Generator, n_min=5, n_max=50) -> ProgramGraph:
    n = int(rng.integers(n_min, n_max + 1))
    nodes = []
    for i in range(n):
        kind = KINDS[int(rng.integers(0, 3))]
        if kind == "instruction":
            text = TEXT_POOL[int(rng.integers(0, len(TEXT_POOL)))]
            nodes.append(GraphNode(id=i, kind=kind, text=text.split()[0], full_text=text))
        else:
            text = SHORT_POOL[int(rng.integers(0, len(SHORT_POOL)))]
            nodes.append(GraphNode(id=i, kind=kind, text=text, full_text=text))
    edges = []
    for rel, density in (("control", 1.2), ("data", 1.5), ("call", 0.2)):
        for _ in range(int(max(1, density * n))):
            edges.append(GraphEdge(
                src=int(rng.integers(0, n)), dst=int(rng.integers(0, n)),
                relation=rel, position=int(rng.integers(0, 6))))
    return ProgramGraph(nodes=nodes, edges=edges, origin="source", language="cpp")


def permute_graph(graph: ProgramGraph, perm: np.ndarray) -> ProgramGraph:
    """Relabel node i as perm[i]; node list reordered, edge order kept."""
    new_nodes = [None] * len(graph.nodes)
    for node in graph.nodes:
        j = int(perm[node.id])
        new_nodes[j] = GraphNode(id=j, kind=node.kind, text=node.text,
                                 full_text=node.full_text)
    new_edges = [GraphEdge(src=int(perm[e.src]), dst=int(perm[e.dst]),
                           relation=e.relation, position=e.position)
                 for e in graph.edges]
    return ProgramGraph(nodes=new_nodes, edges=new_edges,
                        origin=graph.origin, language=graph.language)


def shuffle_edges(graph: ProgramGraph, rng: np.random.Generator) -> ProgramGraph:
    order = rng.permutation(len(graph.edges))
    return ProgramGraph(
        nodes=list(graph.nodes),
        edges=[graph.edges[i] for i in order],
        origin=graph.origin, language=graph.language)
