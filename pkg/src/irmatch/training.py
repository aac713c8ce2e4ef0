"""Pair-matching training loop: Adam on BCE with validation-F1 selection.

Each batch is a disjoint union of pair graphs scored in one forward
pass. After every epoch the train and validation sets are re-scored
without dropout; the parameter snapshot with the best validation F1 is
what training returns. Early stop on patience, or optionally once the
train F1 reaches a target.
"""

import csv
import os
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import PairSample
from .errors import NoInputs, NonFiniteLoss, NumericError
from .graph import load_graph
from .metrics import compute_metrics
from .model import (
    EncodedGraph,
    ModelConfig,
    encode_for_model,
    forward_batch,
    init_parameters,
    make_batch,
)
from .optim import AdamState, adam_step, zero_gradients
from .tensor import Tensor, bce_loss, constant, parameter, run_backward
from .tokenizer import TokenVocabulary


@dataclass
class TrainConfig:
    lr: float = 6.6e-5
    batch_size: int = 32
    epochs: int = 200
    patience: int = 20
    dropout: float = 0.5
    threshold: float = 0.5
    seed: int = 0
    stop_at_train_f1: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return {"lr": self.lr, "batch_size": self.batch_size,
                "epochs": self.epochs, "patience": self.patience,
                "dropout": self.dropout, "threshold": self.threshold,
                "seed": self.seed, "stop_at_train_f1": self.stop_at_train_f1}


@dataclass(frozen=True)
class EncodedPair:
    a: EncodedGraph
    b: EncodedGraph
    label: int
    path_a: str
    path_b: str

    @property
    def size_gap(self) -> int:
        return abs(self.a.n_nodes - self.b.n_nodes)


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    best_val_f1: float
    history: List[Dict[str, float]] = field(default_factory=list)


def encode_pairs(pairs: Sequence[PairSample], vocab: TokenVocabulary,
                 cache: Optional[Dict[str, EncodedGraph]] = None
                 ) -> List[EncodedPair]:
    if cache is None:
        cache = {}

    def enc(path: str) -> EncodedGraph:
        if path not in cache:
            cache[path] = encode_for_model(load_graph(path), vocab)
        return cache[path]

    return [EncodedPair(a=enc(p.a), b=enc(p.b), label=p.label,
                        path_a=p.a, path_b=p.b) for p in pairs]


def _batch_slices(n: int, batch_size: int) -> List[Tuple[int, int]]:
    return [(lo, min(lo + batch_size, n)) for lo in range(0, n, batch_size)]


def _pair_batch(chunk: Sequence[EncodedPair]):
    graphs: List[EncodedGraph] = []
    for p in chunk:
        graphs.append(p.a)
        graphs.append(p.b)
    return make_batch(graphs)


def _score_batches(params: Dict[str, Tensor], batches,
                   config: ModelConfig) -> np.ndarray:
    if not batches:
        return np.zeros(0)
    return np.concatenate([
        forward_batch(params, b, config, rng=None, training=False).data
        for b in batches])


def _bce_numpy(scores: np.ndarray, labels: np.ndarray) -> float:
    if scores.size == 0:
        return 0.0
    clamped = np.clip(scores, 1e-7, 1.0 - 1e-7)
    return float(np.mean(-(labels * np.log(clamped)
                           + (1.0 - labels) * np.log(1.0 - clamped))))


def evaluate_pairs(params: Dict[str, Tensor], encoded: Sequence[EncodedPair],
                   config: ModelConfig, batch_size: int = 32
                   ) -> Tuple[np.ndarray, float]:
    """Dropout-free scores for every pair plus their mean BCE loss."""
    if not encoded:
        return np.zeros(0), 0.0
    batches = [_pair_batch(encoded[lo:hi])
               for lo, hi in _batch_slices(len(encoded), batch_size)]
    all_scores = _score_batches(params, batches, config)
    labels = np.array([p.label for p in encoded], dtype=np.float64)
    return all_scores, _bce_numpy(all_scores, labels)


def _copy_params(params: Dict[str, Tensor]) -> Dict[str, Tensor]:
    return {name: parameter(t.data.copy(), name=name)
            for name, t in params.items()}


def _f1(scores: np.ndarray, labels: Sequence[int], threshold: float) -> float:
    return compute_metrics(list(scores), list(labels), threshold)["f1"]


def train(train_pairs: Sequence[EncodedPair], val_pairs: Sequence[EncodedPair],
          model_config: ModelConfig, train_config: TrainConfig,
          params: Optional[Dict[str, Tensor]] = None,
          log=None) -> Tuple[Dict[str, Tensor], TrainReport]:
    if not train_pairs:
        raise NoInputs("no training pairs")
    if params is None:
        params = init_parameters(model_config, seed=train_config.seed)
    state = AdamState(lr=train_config.lr)
    shuffle_rng = random.Random(train_config.seed)
    dropout_rng = np.random.default_rng(train_config.seed)

    order = list(range(len(train_pairs)))
    train_labels = [p.label for p in train_pairs]
    val_labels = [p.label for p in val_pairs]

    best_params = _copy_params(params)
    best_val_f1 = -1.0
    best_epoch = 0
    history: List[Dict[str, float]] = []

    cfg = ModelConfig(**{**model_config.to_dict(),
                         "dropout": train_config.dropout})

    # eval-mode batches never change; build them once
    eval_train = [_pair_batch(train_pairs[lo:hi]) for lo, hi in
                  _batch_slices(len(train_pairs), train_config.batch_size)]
    eval_val = [_pair_batch(val_pairs[lo:hi]) for lo, hi in
                _batch_slices(len(val_pairs), train_config.batch_size)]
    val_labels_np = np.array(val_labels, dtype=np.float64)

    for epoch in range(1, train_config.epochs + 1):
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for lo, hi in _batch_slices(len(order), train_config.batch_size):
            chunk = [train_pairs[i] for i in order[lo:hi]]
            try:
                batch = _pair_batch(chunk)
                scores = forward_batch(
                    params, batch, cfg,
                    rng=dropout_rng if train_config.dropout > 0 else None,
                    training=True)
                target = constant(np.array([p.label for p in chunk],
                                           dtype=np.float64))
                loss = bce_loss(scores, target)
                if not np.isfinite(loss.data):
                    raise NonFiniteLoss("loss is not finite")
                run_backward(loss)
                adam_step(params, state)
            except NumericError as exc:
                names = ", ".join("%s|%s" % (p.path_a, p.path_b)
                                  for p in chunk)
                raise NonFiniteLoss(
                    "epoch %d batch over pairs [%s]: %s"
                    % (epoch, names, exc)) from exc
            finally:
                zero_gradients(params)
            epoch_loss += float(loss.data)
            n_batches += 1

        train_scores = _score_batches(params, eval_train, model_config)
        train_f1 = _f1(train_scores, train_labels, train_config.threshold)
        if val_pairs:
            val_scores = _score_batches(params, eval_val, model_config)
            val_loss = _bce_numpy(val_scores, val_labels_np)
            val_f1 = _f1(val_scores, val_labels, train_config.threshold)
        else:
            val_loss, val_f1 = 0.0, train_f1

        row = {"epoch": epoch, "train_loss": epoch_loss / max(1, n_batches),
               "train_f1": train_f1, "val_loss": val_loss, "val_f1": val_f1}
        history.append(row)
        if log:
            log("epoch %3d  loss %.4f  train_f1 %.3f  val_f1 %.3f"
                % (epoch, row["train_loss"], train_f1, val_f1))

        if val_f1 > best_val_f1:
            best_val_f1 = val_f1
            best_epoch = epoch
            best_params = _copy_params(params)

        if (train_config.stop_at_train_f1 is not None
                and train_f1 >= train_config.stop_at_train_f1):
            break
        if epoch - best_epoch >= train_config.patience:
            break

    report = TrainReport(epochs_run=len(history), best_epoch=best_epoch,
                         best_val_f1=best_val_f1, history=history)
    return best_params, report


HISTORY_COLUMNS = ("epoch", "train_loss", "train_f1", "val_loss", "val_f1")


def write_history_csv(history: Sequence[Dict[str, float]], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow(["%d" % row["epoch"],
                             "%.6f" % row["train_loss"],
                             "%.6f" % row["train_f1"],
                             "%.6f" % row["val_loss"],
                             "%.6f" % row["val_f1"]])
