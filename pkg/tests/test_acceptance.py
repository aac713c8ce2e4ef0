"""Acceptance gate: nine end-to-end criteria, one test (and one printed
PASS line) each. Run with `pytest -v tests/test_acceptance.py`.

The slow criteria share one module-scoped workspace: a synthetic corpus
is generated once, turned into graphs/vocab/pairs through the CLI, and
the full-size training run feeds criteria 6 and 7.
"""

import hashlib
import json
import os
import time

import numpy as np
import pytest

import battery_tensor
import graph_random
import oracle_graph
from irmatch.cli import main as cli_main
from irmatch.dataset import read_pairs
from irmatch.graph import build_graph
from irmatch.metrics import (
    compute_metrics,
    metrics_from_counts,
    threshold_sweep,
)
from irmatch.model import ModelConfig, init_parameters, predict_pair
from irmatch.parser import parse_module
from irmatch.tokenizer import ID_RE, load_vocabulary, normalize_instruction
from irmatch.training import TrainConfig, encode_pairs, evaluate_pairs, train
from irmatch.util import next_pow2_at_least_mean
from test_graph import FIXTURES, graph_edge_counters, read
from test_model import end_to_end_fd_error


def _ok(n: int, detail: str) -> None:
    print("criterion %d: PASS - %s" % (n, detail))


def _sha(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# --- shared workspace ------------------------------------------------------

@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    corpus = str(root / "corpus")
    data = str(root / "data")
    pairs = str(root / "pairs")
    vocab_full = str(root / "vocab_full.json")
    assert cli_main(["--seed", "0", "make-synthetic-corpus",
                     "--out", corpus]) == 0
    assert cli_main(["build-graphs", "--corpus", corpus, "--out", data]) == 0
    manifest = os.path.join(data, "manifest.jsonl")
    assert cli_main(["--seed", "0", "train-vocab", "--manifest", manifest,
                     "--out", vocab_full]) == 0
    assert cli_main(["--seed", "0", "make-pairs", "--manifest", manifest,
                     "--out", pairs]) == 0
    return {"root": str(root), "corpus": corpus, "manifest": manifest,
            "pairs": pairs, "vocab_full": vocab_full}


@pytest.fixture(scope="module")
def overfit(workspace):
    """Full-size training on the synthetic corpus; feeds criteria 6-7."""
    vocab = load_vocabulary(workspace["vocab_full"])
    cache = {}
    encoded = {}
    for name in ("train", "val", "test"):
        raw = read_pairs(os.path.join(workspace["pairs"],
                                      "pairs_%s.jsonl" % name))
        encoded[name] = encode_pairs(raw, vocab, cache)
    model_config = ModelConfig(vocab_size=len(vocab))
    # fixed 50-epoch budget; selection still tracks the best val epoch
    train_config = TrainConfig(epochs=50, patience=200, seed=0)
    t0 = time.time()
    params, report = train(encoded["train"], encoded["val"], model_config,
                           train_config)
    wall = time.time() - t0
    scores, _ = evaluate_pairs(params, encoded["test"], model_config)
    return {"report": report, "wall": wall,
            "scores": scores,
            "labels": [p.label for p in encoded["test"]],
            "gaps": [p.size_gap for p in encoded["test"]]}


# --- criterion 1: metric arithmetic ----------------------------------------

def test_criterion_1_metric_arithmetic():
    t0 = time.time()
    # counts chosen so precision/recall are exactly 0.76/0.82
    cross = metrics_from_counts(tp=3116, fp=984, fn=684, tn=0)
    assert abs(cross["precision"] - 0.76) < 1e-12
    assert abs(cross["recall"] - 0.82) < 1e-12
    assert abs(cross["f1"] - 0.79) <= 0.005
    # and exactly 0.88/0.86
    single = metrics_from_counts(tp=946, fp=129, fn=154, tn=0)
    assert abs(single["precision"] - 0.88) < 1e-12
    assert abs(single["recall"] - 0.86) < 1e-12
    assert abs(single["f1"] - 0.87) <= 0.005
    elapsed = time.time() - t0
    assert elapsed < 1.0
    _ok(1, "P=0.76,R=0.82 -> F1=%.5f; P=0.88,R=0.86 -> F1=%.5f "
           "(both within 0.005, %.3fs)"
        % (cross["f1"], single["f1"], elapsed))


# --- criterion 2: gradient suite -------------------------------------------

def test_criterion_2_gradient_suite():
    t0 = time.time()
    worst = battery_tensor.worst_errors(range(10))
    offenders = {k: v for k, v in worst.items() if v > 1e-4}
    assert not offenders, "primitives over 1e-4: %s" % offenders
    vocab = graph_random.shared_vocab()
    end_to_end = {seed: end_to_end_fd_error(vocab, seed)
                  for seed in (1, 2, 3, 5, 6)}
    assert max(end_to_end.values()) <= 1e-3, end_to_end
    elapsed = time.time() - t0
    assert elapsed < 120.0
    _ok(2, "%d primitives max err %.2e (<=1e-4); end-to-end max %.2e "
           "(<=1e-3) over 5 seeds (%.1fs)"
        % (len(worst), max(worst.values()), max(end_to_end.values()),
           elapsed))


# --- criterion 3: invariance suite ------------------------------------------

def test_criterion_3_invariance_suite():
    vocab = graph_random.shared_vocab()
    config = ModelConfig(vocab_size=len(vocab), dropout=0.0)
    params = init_parameters(config, seed=0)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        a = graph_random.random_graph(rng, 5, 50)
        b = graph_random.random_graph(rng, 5, 50)
        base = predict_pair(params, a, b, vocab, config)
        pa = graph_random.permute_graph(a, rng.permutation(len(a.nodes)))
        pb = graph_random.permute_graph(b, rng.permutation(len(b.nodes)))
        permuted = predict_pair(params, pa, pb, vocab, config)
        sa = graph_random.shuffle_edges(a, rng)
        sb = graph_random.shuffle_edges(b, rng)
        shuffled = predict_pair(params, sa, sb, vocab, config)
        worst = max(worst, abs(permuted - base), abs(shuffled - base))
    assert worst <= 1e-9, "worst score drift %.3e" % worst
    _ok(3, "20 random graph pairs (5-50 nodes): worst permutation/shuffle "
           "drift %.2e (<=1e-9)" % worst)


# --- criterion 4: graph-builder oracle --------------------------------------

def test_criterion_4_graph_builder_oracle():
    assert len(FIXTURES) >= 10, "need at least 10 fixture files"
    for path in FIXTURES:
        module = parse_module(read(path), source_path=path)
        graph = build_graph(module)
        got = graph_edge_counters(module, graph)
        assert got["control"] == oracle_graph.expected_control(module), path
        assert got["data"] == oracle_graph.expected_data(module), path
        assert got["call"] == oracle_graph.expected_calls(module), path
    _ok(4, "%d fixtures match brute-force control/data/call edge sets "
           "with positions" % len(FIXTURES))


# --- criterion 5: tokenizer rules -------------------------------------------

def test_criterion_5_tokenizer_rules():
    nodes = 0
    for path in FIXTURES:
        module = parse_module(read(path), source_path=path)
        graph = build_graph(module)
        for node in graph.nodes:
            for raw in (node.text, node.full_text):
                expected = len(ID_RE.findall(raw))
                got = normalize_instruction(raw).split().count("[VAR]")
                assert got == expected, (path, raw)
            nodes += 1
    assert next_pow2_at_least_mean(50, 1) == 64
    assert next_pow2_at_least_mean(64, 1) == 64
    assert next_pow2_at_least_mean(65, 1) == 128
    _ok(5, "identifier placeholder count matches on %d fixture nodes; "
           "truncation means 50->64, 64->64, 65->128" % nodes)


# --- criterion 6: overfit run ------------------------------------------------

def test_criterion_6_overfit_run(overfit):
    report = overfit["report"]
    best_train = max(row["train_f1"] for row in report.history)
    hit_epoch = next(row["epoch"] for row in report.history
                     if row["train_f1"] >= 0.95)
    assert report.epochs_run <= 200
    assert best_train >= 0.95, "train F1 peaked at %.3f" % best_train
    assert overfit["wall"] < 600.0, "training took %.0fs" % overfit["wall"]
    held = compute_metrics(overfit["scores"], overfit["labels"], 0.5)
    assert held["f1"] >= 0.5 + 0.15, "held-out F1 %.3f" % held["f1"]
    _ok(6, "train F1 %.3f (>=0.95 from epoch %d, %d epochs, %.0fs); "
           "held-out-task F1 %.3f P %.3f R %.3f (>=0.65, best val %.3f "
           "at epoch %d)"
        % (best_train, hit_epoch, report.epochs_run, overfit["wall"],
           held["f1"], held["precision"], held["recall"],
           report.best_val_f1, report.best_epoch))


# --- criterion 7: threshold sweep --------------------------------------------

def test_criterion_7_threshold_sweep(overfit):
    scores, labels = overfit["scores"], overfit["labels"]
    sweep = threshold_sweep(scores, labels)
    pred_pos = [row["pred_pos"] for row in sweep]
    recall = [row["recall"] for row in sweep]
    assert all(a >= b for a, b in zip(pred_pos, pred_pos[1:])), pred_pos
    assert all(a >= b for a, b in zip(recall, recall[1:])), recall
    at_half = next(row for row in sweep if row["threshold"] == 0.5)
    assert at_half == compute_metrics(scores, labels, 0.5)
    _ok(7, "pred_pos %d->%d and recall %.2f->%.2f non-increasing over 21 "
           "thresholds; 0.5 row identical to single evaluation"
        % (pred_pos[0], pred_pos[-1], recall[0], recall[-1]))


# --- criterion 8: node-text ablation -----------------------------------------

def test_criterion_8_feature_mode_ablation(workspace, tmp_path):
    f1 = {}
    for mode in ("full_text", "text"):
        out = tmp_path / mode
        vocab = str(out / "vocab.json")
        assert cli_main(["--seed", "0", "--feature-mode", mode,
                         "train-vocab", "--manifest", workspace["manifest"],
                         "--out", vocab]) == 0
        assert cli_main(["--seed", "0", "--feature-mode", mode, "train",
                         "--vocab", vocab, "--pairs", workspace["pairs"],
                         "--out", str(out / "run"), "--epochs", "8"]) == 0
        assert cli_main(["eval", "--vocab", vocab,
                         "--checkpoint", str(out / "run" / "model.ckpt"),
                         "--pairs", os.path.join(workspace["pairs"],
                                                 "pairs_test.jsonl"),
                         "--out", str(out / "eval")]) == 0
        with open(out / "eval" / "metrics.json", encoding="utf-8") as fh:
            f1[mode] = json.load(fh)["f1"]
    assert all(np.isfinite(v) for v in f1.values())
    if f1["full_text"] == f1["text"]:
        direction = "tied"
    elif f1["full_text"] > f1["text"]:
        direction = "full_text ahead"
    else:
        direction = "text ahead"
    _ok(8, "held-out F1 side by side: full_text %.3f vs text %.3f "
           "(8-epoch budget, %s; direction reported, not asserted)"
        % (f1["full_text"], f1["text"], direction))


# --- criterion 9: determinism -------------------------------------------------

def test_criterion_9_pipeline_determinism(workspace, tmp_path):
    config = tmp_path / "small.json"
    config.write_text(json.dumps({
        "embedding_dim": 16, "hidden_dim": 32, "num_layers": 2,
        "max_position": 8, "epochs": 3, "lr": 1e-3, "dropout": 0.0,
        "batch_size": 16}))
    digests = []
    for run in ("one", "two"):
        root = tmp_path / run
        data = str(root / "data")
        pairs = str(root / "pairs")
        vocab = str(root / "vocab.json")
        out = str(root / "run")
        base = ["--seed", "0", "--config", str(config)]
        assert cli_main(base + ["build-graphs", "--corpus",
                                workspace["corpus"], "--out", data]) == 0
        manifest = os.path.join(data, "manifest.jsonl")
        assert cli_main(base + ["train-vocab", "--manifest", manifest,
                                "--out", vocab]) == 0
        assert cli_main(base + ["make-pairs", "--manifest", manifest,
                                "--out", pairs]) == 0
        assert cli_main(base + ["train", "--vocab", vocab, "--pairs", pairs,
                                "--out", out]) == 0
        assert cli_main(base + ["eval", "--vocab", vocab,
                                "--checkpoint", os.path.join(out, "model.ckpt"),
                                "--pairs", os.path.join(pairs,
                                                        "pairs_test.jsonl"),
                                "--out", str(root / "eval")]) == 0
        digests.append({
            "manifest": _sha(manifest),
            "vocab": _sha(vocab),
            "pairs": _sha(os.path.join(pairs, "pairs_test.jsonl")),
            "checkpoint": _sha(os.path.join(out, "model.ckpt")),
            "history": _sha(os.path.join(out, "history.csv")),
            "report": _sha(os.path.join(out, "report.json")),
            "metrics": _sha(str(root / "eval" / "metrics.json")),
            "sweep": _sha(str(root / "eval" / "sweep.csv")),
        })
    assert digests[0] == digests[1]
    _ok(9, "two pipeline runs bitwise-identical over %d artifacts "
           "(checkpoint, history, report, metrics, sweep, vocab, pairs)"
        % len(digests[0]))
