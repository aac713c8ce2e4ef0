"""Command line interface.

Exit codes: 0 success, 1 usage problem, 2 data error, 3 numeric failure.

Settings resolve in precedence order: explicit flag, then the JSON file
given via --config, then the built-in default.
"""

import argparse
import json
import multiprocessing
import os
import sys
from typing import Dict, Optional

from .dataset import (
    ManifestRecord,
    generate_pairs,
    read_manifest,
    read_pairs,
    split_by_task,
    write_manifest,
    write_pairs,
)
from .errors import CorruptPayload, IrMatchError, NumericError
from .graph import build_graph, load_graph, save_graph
from .metrics import (
    compute_metrics,
    size_gap_analysis,
    threshold_sweep,
    write_sweep_csv,
)
from .model import ModelConfig, predict_pair
from .optim import load_checkpoint, save_checkpoint
from .parser import parse_module
from .plots import plot_history, plot_threshold_sweep
from .synthetic import VARIANTS_PER_CELL, generate_corpus
from .tokenizer import (
    FEATURE_MODES,
    corpus_from_graphs,
    load_vocabulary,
    save_vocabulary,
    train_vocabulary,
)
from .training import (
    TrainConfig,
    encode_pairs,
    evaluate_pairs,
    train,
    write_history_csv,
)
from .util import canonical_json


class UsageError(Exception):
    """Invocation problem detected after argument parsing; exits 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad arguments; this tool reserves 2 for data
    # errors, so usage problems must exit 1 instead
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, "%s: error: %s\n" % (self.prog, message))


# every key a --config file may set, with the type it is coerced to
_CONFIG_KEYS = {
    "seed": int,
    "workers": int,
    "feature_mode": str,
    "threshold": float,
    "vocab_size": int,
    "embedding_dim": int,
    "hidden_dim": int,
    "num_layers": int,
    "leaky_slope": float,
    "max_position": int,
    "dropout": float,
    "lr": float,
    "batch_size": int,
    "epochs": int,
    "patience": int,
    "stop_at_train_f1": float,
    "variants": int,
}


def load_config_file(path: Optional[str]) -> Dict[str, object]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptPayload("config %s: %s" % (path, exc)) from exc
    if not isinstance(raw, dict):
        raise CorruptPayload("config %s: expected a JSON object" % path)
    out: Dict[str, object] = {}
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            raise UsageError("config %s: unknown key %r" % (path, key))
        if value is None:
            continue
        try:
            out[key] = _CONFIG_KEYS[key](value)
        except (TypeError, ValueError) as exc:
            raise CorruptPayload(
                "config %s: bad value for %r: %s" % (path, key, exc)) from exc
    if "feature_mode" in out and out["feature_mode"] not in FEATURE_MODES:
        raise UsageError("config %s: feature_mode must be one of %s"
                         % (path, ", ".join(sorted(FEATURE_MODES))))
    return out


def _pick(flag, cfg: Dict[str, object], key: str, default):
    if flag is not None:
        return flag
    if key in cfg:
        return cfg[key]
    return default


def _write_json(obj, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj) + "\n")


def _check_feature_mode(requested: Optional[str], actual: str,
                        artifact: str) -> None:
    if requested is not None and requested != actual:
        raise UsageError(
            "--feature-mode %s conflicts with %s (built with %s)"
            % (requested, artifact, actual))


# --- build-graphs ---------------------------------------------------------

def _build_graph_job(job) -> str:
    src, origin, lang, dst = job
    with open(src, encoding="utf-8") as fh:
        text = fh.read()
    module = parse_module(text, source_path=src)
    save_graph(build_graph(module, origin=origin, language=lang), dst)
    return dst


def cmd_build_graphs(args, cfg) -> int:
    from .dataset import scan_corpus
    workers = int(_pick(args.workers, cfg, "workers", 1))
    jobs = []
    records = []
    for path, task, origin, lang in scan_corpus(args.corpus):
        rel = os.path.relpath(path, args.corpus)
        dst = os.path.join(args.out, "graphs",
                           os.path.splitext(rel)[0] + ".pgraph")
        jobs.append((path, origin, lang, dst))
        records.append(ManifestRecord(graph=dst, task=task, lang=lang,
                                      origin=origin))
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            pool.map(_build_graph_job, jobs)
    else:
        for job in jobs:
            _build_graph_job(job)
    manifest = os.path.join(args.out, "manifest.jsonl")
    write_manifest(records, manifest)
    print("built %d graphs -> %s" % (len(jobs), manifest))
    return 0


# --- train-vocab ----------------------------------------------------------

def cmd_train_vocab(args, cfg) -> int:
    seed = int(_pick(args.seed, cfg, "seed", 0))
    mode = _pick(args.feature_mode, cfg, "feature_mode", "full_text")
    vocab_size = int(_pick(args.vocab_size, cfg, "vocab_size", 2048))
    records = read_manifest(args.manifest)
    split = split_by_task(sorted({r.task for r in records}), seed)
    train_tasks = set(split.train)
    graphs = (load_graph(r.graph) for r in records if r.task in train_tasks)
    vocab = train_vocabulary(corpus_from_graphs(graphs, mode),
                             vocab_size=vocab_size, feature_mode=mode)
    save_vocabulary(vocab, args.out)
    print("vocabulary: %d entries, truncation %d -> %s"
          % (len(vocab), vocab.truncation_length, args.out))
    return 0


# --- make-pairs -----------------------------------------------------------

def cmd_make_pairs(args, cfg) -> int:
    seed = int(_pick(args.seed, cfg, "seed", 0))
    records = read_manifest(args.manifest)
    split = split_by_task(sorted({r.task for r in records}), seed)
    tasks_by = {"train": split.train, "val": split.val, "test": split.test}
    counts = {}
    # offset seeds keep the three samplers on distinct streams
    for offset, name in enumerate(("train", "val", "test")):
        pairs = generate_pairs(records, tasks_by[name], seed + offset)
        write_pairs(pairs, os.path.join(args.out, "pairs_%s.jsonl" % name))
        counts[name] = len(pairs)
    _write_json({"seed": seed, "tasks": tasks_by},
                os.path.join(args.out, "split.json"))
    print("pairs: train %d, val %d, test %d -> %s"
          % (counts["train"], counts["val"], counts["test"], args.out))
    return 0


# --- train ----------------------------------------------------------------

def cmd_train(args, cfg) -> int:
    seed = int(_pick(args.seed, cfg, "seed", 0))
    threshold = float(_pick(args.threshold, cfg, "threshold", 0.5))
    vocab = load_vocabulary(args.vocab)
    _check_feature_mode(_pick(args.feature_mode, cfg, "feature_mode", None),
                        vocab.feature_mode, args.vocab)

    train_raw = read_pairs(os.path.join(args.pairs, "pairs_train.jsonl"))
    val_path = os.path.join(args.pairs, "pairs_val.jsonl")
    val_raw = read_pairs(val_path) if os.path.exists(val_path) else []
    cache: Dict[str, object] = {}
    enc_train = encode_pairs(train_raw, vocab, cache)
    enc_val = encode_pairs(val_raw, vocab, cache)

    dropout = float(_pick(args.dropout, cfg, "dropout", 0.5))
    model_config = ModelConfig(
        vocab_size=len(vocab),
        embedding_dim=int(cfg.get("embedding_dim", 128)),
        hidden_dim=int(cfg.get("hidden_dim", 256)),
        num_layers=int(cfg.get("num_layers", 5)),
        leaky_slope=float(cfg.get("leaky_slope", 0.2)),
        dropout=dropout,
        max_position=int(cfg.get("max_position", 32)),
        feature_mode=vocab.feature_mode,
    )
    stop_at = _pick(args.stop_at_train_f1, cfg, "stop_at_train_f1", None)
    train_config = TrainConfig(
        lr=float(_pick(args.lr, cfg, "lr", 6.6e-5)),
        batch_size=int(_pick(args.batch_size, cfg, "batch_size", 32)),
        epochs=int(_pick(args.epochs, cfg, "epochs", 200)),
        patience=int(_pick(args.patience, cfg, "patience", 20)),
        dropout=dropout,
        threshold=threshold,
        seed=seed,
        stop_at_train_f1=None if stop_at is None else float(stop_at),
    )

    params, report = train(enc_train, enc_val, model_config, train_config,
                           log=lambda line: print(line, flush=True))

    ckpt = os.path.join(args.out, "model.ckpt")
    save_checkpoint(ckpt, params,
                    {"model": model_config.to_dict(),
                     "train": train_config.to_dict()})
    write_history_csv(report.history, os.path.join(args.out, "history.csv"))
    plot_history(report.history, os.path.join(args.out, "loss.png"))
    _write_json({"epochs_run": report.epochs_run,
                 "best_epoch": report.best_epoch,
                 "best_val_f1": report.best_val_f1,
                 "train_pairs": len(enc_train),
                 "val_pairs": len(enc_val)},
                os.path.join(args.out, "report.json"))
    _write_json({"command": "train", "seed": seed,
                 "feature_mode": vocab.feature_mode, "threshold": threshold,
                 "model": model_config.to_dict(),
                 "train": train_config.to_dict()},
                os.path.join(args.out, "resolved_config.json"))
    print("best val f1 %.4f at epoch %d (%d epochs run) -> %s"
          % (report.best_val_f1, report.best_epoch, report.epochs_run, ckpt))
    return 0


# --- eval -----------------------------------------------------------------

def _load_model(args, cfg):
    vocab = load_vocabulary(args.vocab)
    params, ck_config = load_checkpoint(args.checkpoint)
    if "model" not in ck_config:
        raise CorruptPayload("checkpoint %s carries no model settings"
                             % args.checkpoint)
    model_config = ModelConfig.from_dict(ck_config["model"])
    _check_feature_mode(_pick(args.feature_mode, cfg, "feature_mode", None),
                        model_config.feature_mode, args.checkpoint)
    if vocab.feature_mode != model_config.feature_mode:
        raise CorruptPayload(
            "vocabulary %s is %s but checkpoint %s expects %s"
            % (args.vocab, vocab.feature_mode, args.checkpoint,
               model_config.feature_mode))
    if len(vocab) != model_config.vocab_size:
        raise CorruptPayload(
            "vocabulary %s has %d entries but checkpoint %s expects %d"
            % (args.vocab, len(vocab), args.checkpoint,
               model_config.vocab_size))
    return vocab, params, model_config


def cmd_eval(args, cfg) -> int:
    threshold = float(_pick(args.threshold, cfg, "threshold", 0.5))
    batch_size = int(cfg.get("batch_size", 32))
    vocab, params, model_config = _load_model(args, cfg)
    pairs = read_pairs(args.pairs)
    encoded = encode_pairs(pairs, vocab, {})
    scores, loss = evaluate_pairs(params, encoded, model_config,
                                  batch_size=batch_size)
    labels = [p.label for p in encoded]

    summary = compute_metrics(scores, labels, threshold)
    summary["loss"] = loss
    _write_json(summary, os.path.join(args.out, "metrics.json"))

    sweep = threshold_sweep(scores, labels)
    write_sweep_csv(sweep, os.path.join(args.out, "sweep.csv"))
    plot_threshold_sweep(sweep, os.path.join(args.out, "sweep.png"))

    gaps = [p.size_gap for p in encoded]
    _write_json(size_gap_analysis(scores, labels, gaps, threshold),
                os.path.join(args.out, "size_gap.json"))
    _write_json({"command": "eval", "threshold": threshold,
                 "checkpoint": os.path.abspath(args.checkpoint),
                 "vocab": os.path.abspath(args.vocab),
                 "pairs": os.path.abspath(args.pairs),
                 "model": model_config.to_dict()},
                os.path.join(args.out, "resolved_config.json"))
    print("f1 %.4f precision %.4f recall %.4f accuracy %.4f "
          "(threshold %.2f, n=%d) -> %s"
          % (summary["f1"], summary["precision"], summary["recall"],
             summary["accuracy"], threshold, summary["n"], args.out))
    return 0


# --- predict --------------------------------------------------------------

def _graph_from_path(path: str):
    if path.endswith(".ll"):
        with open(path, encoding="utf-8") as fh:
            module = parse_module(fh.read(), source_path=path)
        return build_graph(module)
    return load_graph(path)


def cmd_predict(args, cfg) -> int:
    threshold = float(_pick(args.threshold, cfg, "threshold", 0.5))
    vocab, params, model_config = _load_model(args, cfg)
    graph_a = _graph_from_path(args.input_a)
    graph_b = _graph_from_path(args.input_b)
    score = predict_pair(params, graph_a, graph_b, vocab, model_config)
    print(json.dumps({"a": args.input_a, "b": args.input_b,
                      "score": round(score, 6),
                      "match": bool(score >= threshold),
                      "threshold": threshold}, sort_keys=True))
    return 0


# --- make-synthetic-corpus ------------------------------------------------

def cmd_make_synthetic_corpus(args, cfg) -> int:
    seed = int(_pick(args.seed, cfg, "seed", 0))
    variants = int(_pick(args.variants, cfg, "variants", VARIANTS_PER_CELL))
    if variants < 1:
        raise UsageError("--variants must be at least 1")
    written = generate_corpus(args.out, seed, variants=variants)
    print("wrote %d files under %s" % (len(written), args.out))
    return 0


# --- parser ---------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="irmatch",
                     description="Match LLVM IR files by learned "
                                 "program-graph similarity.")
    parser.add_argument("--seed", type=int, default=None,
                        help="base random seed (default 0)")
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="JSON file with default settings")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel workers for graph building (default 1)")
    parser.add_argument("--feature-mode", choices=sorted(FEATURE_MODES),
                        default=None,
                        help="node text style (default full_text)")
    parser.add_argument("--threshold", type=float, default=None,
                        help="match decision threshold (default 0.5)")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    p = sub.add_parser("build-graphs",
                       help="parse a <task>/<origin>/<lang>/*.ll tree into "
                            "program graphs")
    p.add_argument("--corpus", required=True, help="IR corpus root")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("train-vocab",
                       help="learn a subword vocabulary from the training "
                            "split of a graph manifest")
    p.add_argument("--manifest", required=True, help="manifest.jsonl path")
    p.add_argument("--out", required=True, help="vocabulary output path")
    p.add_argument("--vocab-size", type=int, default=None,
                   help="maximum vocabulary entries (default 2048)")
    p.set_defaults(func=cmd_train_vocab)

    p = sub.add_parser("make-pairs",
                       help="split tasks 6:2:2 and emit balanced "
                            "matched/unmatched pair lists")
    p.add_argument("--manifest", required=True, help="manifest.jsonl path")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_make_pairs)

    p = sub.add_parser("train", help="train the pair matcher")
    p.add_argument("--vocab", required=True, help="vocabulary path")
    p.add_argument("--pairs", required=True,
                   help="directory holding pairs_train.jsonl / "
                        "pairs_val.jsonl")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--stop-at-train-f1", type=float, default=None,
                   help="stop once training F1 reaches this value")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval",
                       help="score a pair list and write metrics, a "
                            "threshold sweep, and a size-gap report")
    p.add_argument("--vocab", required=True, help="vocabulary path")
    p.add_argument("--checkpoint", required=True, help="checkpoint path")
    p.add_argument("--pairs", required=True, help="pair list (jsonl)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="score one pair of IR files")
    p.add_argument("--vocab", required=True, help="vocabulary path")
    p.add_argument("--checkpoint", required=True, help="checkpoint path")
    p.add_argument("input_a", help=".ll or .pgraph file")
    p.add_argument("input_b", help=".ll or .pgraph file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("make-synthetic-corpus",
                       help="write the built-in synthetic IR corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--variants", type=int, default=None,
                   help="files per (task, origin, lang) cell")
    p.set_defaults(func=cmd_make_synthetic_corpus)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config_file(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print("%s: error: %s" % (parser.prog, exc), file=sys.stderr)
        return 1
    except NumericError as exc:
        print("%s: numeric failure: %s" % (parser.prog, exc), file=sys.stderr)
        return 3
    except IrMatchError as exc:
        print("%s: data error: %s" % (parser.prog, exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print("%s: data error: %s" % (parser.prog, exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
