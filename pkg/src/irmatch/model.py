"""Pair-matching network over program graphs.

Per node: token embeddings reduced by masked max, projected to the
hidden width. Per layer: one attention pass per edge relation (control,
data, call) where an edge j->i scores
    a . leaky_relu(W_src h_j + W_dst h_i + P[min(pos, max_position-1)])
and messages W_src h_j are softmax-weighted over each target's incoming
edges. Relation outputs fuse by elementwise max, then layer norm and
leaky relu. A global attention pool gates nodes against a mean-derived
context vector; the two pooled graph vectors concatenate into a small
feed-forward head ending in a sigmoid match score.

Pairs are processed as one disjoint union graph: rows a0,b0,a1,b1,...
with per-node graph ids, so a batch is a single set of matrix ops.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyBatch, NonFiniteScore, ShapeMismatch
from .graph import RELATIONS, ProgramGraph
from .tensor import (
    Tensor,
    add,
    constant,
    dropout,
    gather_rows,
    layer_norm,
    leaky_relu,
    matmul,
    max_over_axis,
    maximum,
    mul,
    parameter,
    reshape,
    segment_softmax,
    segment_sum,
    sigmoid,
    sum_over_axis,
    tanh,
)
from .tokenizer import PAD_ID, TokenVocabulary, encode_graph

NEG_MASK = -1e30


@dataclass
class ModelConfig:
    vocab_size: int
    embedding_dim: int = 128
    hidden_dim: int = 256
    num_layers: int = 5
    leaky_slope: float = 0.2
    dropout: float = 0.5
    max_position: int = 32
    feature_mode: str = "full_text"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


def init_parameters(config: ModelConfig, seed: int = 0) -> Dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    h = config.hidden_dim
    e = config.embedding_dim

    def he(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    params: Dict[str, Tensor] = {}

    def put(name, data):
        params[name] = parameter(data, name=name)

    put("embed.table", rng.standard_normal((config.vocab_size, e)) / np.sqrt(e))
    put("proj.w", he((e, h), e))
    put("proj.b", np.zeros(h))
    for layer in range(config.num_layers):
        for rel in RELATIONS:
            base = "conv%d.%s" % (layer, rel)
            put(base + ".w_src", he((h, h), h))
            put(base + ".w_dst", he((h, h), h))
            put(base + ".attn", he((h, 1), h))
            put(base + ".pos", rng.standard_normal((config.max_position, h)) * 0.1)
        put("conv%d.norm.gain" % layer, np.ones(h))
        put("conv%d.norm.bias" % layer, np.zeros(h))
    put("pool.context.w", he((h, h), h))
    put("head.fc1.w", he((2 * h, h), 2 * h))
    put("head.fc1.b", np.zeros(h))
    put("head.norm.gain", np.ones(h))
    put("head.norm.bias", np.zeros(h))
    put("head.fc2.w", he((h, 1), h))
    put("head.fc2.b", np.zeros(1))
    return params


@dataclass
class EncodedGraph:
    """A graph reduced to arrays: token id rows plus per-relation edges."""
    tokens: np.ndarray                                   # (n_nodes, L) int64
    edges: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]]
    n_nodes: int


def encode_for_model(graph: ProgramGraph, vocab: TokenVocabulary) -> EncodedGraph:
    tokens = np.asarray(encode_graph(vocab, graph), dtype=np.int64)
    if tokens.ndim != 2:
        tokens = tokens.reshape(len(graph.nodes), -1)
    edges: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for rel in RELATIONS:
        picked = [(e.src, e.dst, e.position) for e in graph.edges if e.relation == rel]
        if picked:
            src, dst, pos = (np.asarray(col, dtype=np.int64) for col in zip(*picked))
        else:
            src = dst = pos = np.zeros(0, dtype=np.int64)
        edges[rel] = (src, dst, pos)
    return EncodedGraph(tokens=tokens, edges=edges, n_nodes=len(graph.nodes))


@dataclass
class GraphBatch:
    tokens: np.ndarray
    graph_ids: np.ndarray
    n_graphs: int
    n_nodes: int
    edges: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]]
    counts: np.ndarray = field(default=None)


def make_batch(graphs: Sequence[EncodedGraph]) -> GraphBatch:
    """Disjoint union with a self-loop per node in every relation, so
    every node attends at least to itself."""
    if not graphs:
        raise EmptyBatch("no graphs to batch")
    width = graphs[0].tokens.shape[1]
    for g in graphs:
        if g.tokens.shape[1] != width:
            raise ShapeMismatch("mixed token widths in one batch")
    tokens = np.concatenate([g.tokens for g in graphs], axis=0)
    counts = np.array([g.n_nodes for g in graphs], dtype=np.int64)
    graph_ids = np.repeat(np.arange(len(graphs), dtype=np.int64), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    n_nodes = int(counts.sum())
    loops = np.arange(n_nodes, dtype=np.int64)
    edges: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for rel in RELATIONS:
        srcs: List[np.ndarray] = []
        dsts: List[np.ndarray] = []
        poss: List[np.ndarray] = []
        for g, off in zip(graphs, offsets):
            src, dst, pos = g.edges[rel]
            srcs.append(src + off)
            dsts.append(dst + off)
            poss.append(pos)
        src_all = np.concatenate(srcs + [loops])
        dst_all = np.concatenate(dsts + [loops])
        pos_all = np.concatenate(poss + [np.zeros(n_nodes, dtype=np.int64)])
        # grouping by destination lets the segment ops take their
        # contiguous fast path; attention is order-invariant anyway
        order = np.argsort(dst_all, kind="stable")
        edges[rel] = (src_all[order], dst_all[order], pos_all[order])
    return GraphBatch(tokens=tokens, graph_ids=graph_ids, n_graphs=len(graphs),
                      n_nodes=n_nodes, edges=edges, counts=counts)


def embed_nodes(params: Dict[str, Tensor], tokens: np.ndarray,
                config: ModelConfig) -> Tensor:
    """Token embeddings -> masked max over the token axis -> projection.
    Rows that are all padding come out as zero vectors."""
    emb = gather_rows(params["embed.table"], tokens)          # (N, L, E)
    pad = tokens == PAD_ID
    emb = add(emb, constant(np.where(pad, NEG_MASK, 0.0)[:, :, None]))
    pooled = max_over_axis(emb, 1)                            # (N, E)
    has_any = (~pad).any(axis=1).astype(np.float64)
    pooled = mul(pooled, constant(has_any[:, None]))
    return add(matmul(pooled, params["proj.w"]), params["proj.b"])


def relation_layer(params: Dict[str, Tensor], h: Tensor, batch: GraphBatch,
                   layer: int, config: ModelConfig) -> Tensor:
    n = batch.n_nodes
    outs: List[Tensor] = []
    for rel in RELATIONS:
        base = "conv%d.%s" % (layer, rel)
        src, dst, pos = batch.edges[rel]
        pos = np.minimum(pos, config.max_position - 1)
        hs = matmul(h, params[base + ".w_src"])
        ht = matmul(h, params[base + ".w_dst"])
        msg = gather_rows(hs, src)                            # (E, H)
        tgt = gather_rows(ht, dst)
        pe = gather_rows(params[base + ".pos"], pos)
        z = leaky_relu(add(add(msg, tgt), pe), config.leaky_slope)
        score = reshape(matmul(z, params[base + ".attn"]), (len(src),))
        alpha = segment_softmax(score, dst, n)
        weighted = mul(msg, reshape(alpha, (len(src), 1)))
        outs.append(segment_sum(weighted, dst, n))
    fused = maximum(maximum(outs[0], outs[1]), outs[2])
    normed = layer_norm(fused, params["conv%d.norm.gain" % layer],
                        params["conv%d.norm.bias" % layer])
    return leaky_relu(normed, config.leaky_slope)


def attention_pool(params: Dict[str, Tensor], h: Tensor,
                   graph_ids: np.ndarray, n_graphs: int,
                   counts: np.ndarray) -> Tensor:
    """Gate every node against tanh(mean(h) W) of its own graph, then sum."""
    total = segment_sum(h, graph_ids, n_graphs)               # (G, H)
    mean = mul(total, constant(1.0 / counts[:, None]))
    ctx = tanh(matmul(mean, params["pool.context.w"]))        # (G, H)
    per_node = gather_rows(ctx, graph_ids)                    # (N, H)
    gate = sigmoid(sum_over_axis(mul(h, per_node), 1))        # (N,)
    gated = mul(h, reshape(gate, (len(graph_ids), 1)))
    return segment_sum(gated, graph_ids, n_graphs)


def score_pairs(params: Dict[str, Tensor], pooled: Tensor, config: ModelConfig,
                rng: Optional[np.random.Generator], training: bool) -> Tensor:
    n_graphs = pooled.data.shape[0]
    if n_graphs % 2:
        raise ShapeMismatch("pair scoring needs an even graph count")
    pairs = reshape(pooled, (n_graphs // 2, 2 * config.hidden_dim))
    x = add(matmul(pairs, params["head.fc1.w"]), params["head.fc1.b"])
    x = layer_norm(x, params["head.norm.gain"], params["head.norm.bias"])
    x = leaky_relu(x, config.leaky_slope)
    if training and config.dropout > 0.0:
        if rng is None:
            raise ValueError("training forward needs an rng for dropout")
        x = dropout(x, config.dropout, rng, training=True)
    logit = add(matmul(x, params["head.fc2.w"]), params["head.fc2.b"])
    return reshape(sigmoid(logit), (n_graphs // 2,))


def forward_batch(params: Dict[str, Tensor], batch: GraphBatch,
                  config: ModelConfig, rng: Optional[np.random.Generator] = None,
                  training: bool = False) -> Tensor:
    """Match scores for consecutive graph pairs (0,1), (2,3), ..."""
    h = embed_nodes(params, batch.tokens, config)
    for layer in range(config.num_layers):
        h = relation_layer(params, h, batch, layer, config)
    pooled = attention_pool(params, h, batch.graph_ids, batch.n_graphs,
                            batch.counts)
    scores = score_pairs(params, pooled, config, rng, training)
    if not np.isfinite(scores.data).all():
        raise NonFiniteScore("pair score is not finite")
    return scores


def forward(params: Dict[str, Tensor], graph_a: EncodedGraph,
            graph_b: EncodedGraph, config: ModelConfig,
            rng: Optional[np.random.Generator] = None,
            training: bool = False) -> Tensor:
    """Score one pair; returns a length-1 tensor."""
    return forward_batch(params, make_batch([graph_a, graph_b]), config,
                         rng=rng, training=training)


def predict_pair(params: Dict[str, Tensor], graph_a: ProgramGraph,
                 graph_b: ProgramGraph, vocab: TokenVocabulary,
                 config: ModelConfig) -> float:
    enc_a = encode_for_model(graph_a, vocab)
    enc_b = encode_for_model(graph_b, vocab)
    return float(forward(params, enc_a, enc_b, config).data[0])
