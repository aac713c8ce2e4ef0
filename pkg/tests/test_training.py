import numpy as np
import pytest

from graph_random import permute_graph, random_graph, shared_vocab
from irmatch.dataset import PairSample
from irmatch.errors import NoInputs, NonFiniteLoss
from irmatch.graph import save_graph
from irmatch.model import ModelConfig, encode_for_model, init_parameters
from irmatch.optim import save_checkpoint
from irmatch.training import (
    EncodedPair,
    TrainConfig,
    encode_pairs,
    evaluate_pairs,
    train,
    write_history_csv,
    HISTORY_COLUMNS,
)


def tiny_config(vocab, **overrides):
    base = dict(vocab_size=len(vocab.entries), embedding_dim=8, hidden_dim=16,
                num_layers=2, max_position=8, dropout=0.0)
    base.update(overrides)
    return ModelConfig(**base)


def toy_pairs(vocab, n_graphs=6, seed=0):
    """Positives pair a graph with a node permutation of itself;
    negatives pair two different graphs."""
    rng = np.random.default_rng(seed)
    graphs = [random_graph(rng, 6, 12) for _ in range(n_graphs)]
    enc = [encode_for_model(g, vocab) for g in graphs]
    pairs = []
    for i, g in enumerate(graphs):
        perm = rng.permutation(len(g.nodes))
        twin = encode_for_model(permute_graph(g, list(perm)), vocab)
        pairs.append(EncodedPair(a=enc[i], b=twin, label=1,
                                 path_a="g%d.pgraph" % i,
                                 path_b="g%d_twin.pgraph" % i))
        j = (i + 1) % n_graphs
        pairs.append(EncodedPair(a=enc[i], b=enc[j], label=0,
                                 path_a="g%d.pgraph" % i,
                                 path_b="g%d.pgraph" % j))
    return pairs


@pytest.fixture(scope="module")
def vocab():
    return shared_vocab()


class TestTrainLoop:
    def test_loss_decreases(self, vocab):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        tc = TrainConfig(lr=5e-3, epochs=25, patience=100, dropout=0.0,
                         seed=0, batch_size=8)
        _, report = train(pairs, pairs, cfg, tc)
        first = report.history[0]["train_loss"]
        last = report.history[-1]["train_loss"]
        assert last < 0.8 * first

    def test_best_epoch_matches_history(self, vocab):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        tc = TrainConfig(lr=5e-3, epochs=12, patience=100, dropout=0.0, seed=1)
        params, report = train(pairs, pairs, cfg, tc)
        best_from_history = max(report.history, key=lambda r: r["val_f1"])
        assert report.best_val_f1 == best_from_history["val_f1"]
        # first epoch reaching the best value wins (strict improvement rule)
        first_hit = next(r["epoch"] for r in report.history
                         if r["val_f1"] == report.best_val_f1)
        assert report.best_epoch == first_hit
        scores, _ = evaluate_pairs(params, pairs, cfg)
        from irmatch.metrics import compute_metrics
        got = compute_metrics(list(scores), [p.label for p in pairs], 0.5)
        assert got["f1"] == pytest.approx(report.best_val_f1, abs=1e-12)

    def test_patience_stops_early(self, vocab):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        tc = TrainConfig(lr=0.0, epochs=50, patience=3, dropout=0.0, seed=0)
        _, report = train(pairs, pairs, cfg, tc)
        assert report.epochs_run == 4  # epoch 1 is best, then 3 flat epochs

    def test_stop_at_train_f1(self, vocab):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        tc = TrainConfig(lr=0.0, epochs=50, patience=50, dropout=0.0, seed=0,
                         stop_at_train_f1=0.0)
        _, report = train(pairs, pairs, cfg, tc)
        assert report.epochs_run == 1

    def test_deterministic_runs(self, vocab, tmp_path):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        tc = TrainConfig(lr=1e-3, epochs=5, patience=100, dropout=0.0, seed=3)
        p1, r1 = train(pairs, pairs, cfg, tc)
        p2, r2 = train(pairs, pairs, cfg, tc)
        assert r1.history == r2.history
        save_checkpoint(str(tmp_path / "a.ckpt"), p1, cfg.to_dict())
        save_checkpoint(str(tmp_path / "b.ckpt"), p2, cfg.to_dict())
        assert (tmp_path / "a.ckpt").read_bytes() == \
            (tmp_path / "b.ckpt").read_bytes()

    def test_dropout_uses_rng(self, vocab):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        tc = TrainConfig(lr=1e-3, epochs=2, patience=100, dropout=0.5, seed=0)
        _, report = train(pairs, pairs, cfg, tc)
        assert report.epochs_run == 2

    def test_no_pairs_raises(self, vocab):
        cfg = tiny_config(vocab)
        with pytest.raises(NoInputs):
            train([], [], cfg, TrainConfig())

    def test_poisoned_params_rejected_before_any_step(self, vocab):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        params = init_parameters(cfg, seed=0)
        params["embed.table"].data[0, 0] = np.inf
        tc = TrainConfig(lr=1e-3, epochs=1, patience=10, dropout=0.0, seed=0)
        from irmatch.errors import NumericError
        with pytest.raises(NumericError):
            train(pairs, pairs, cfg, tc, params=params)

    def test_nonfinite_names_pair_paths(self, vocab, monkeypatch):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        from irmatch import training as training_mod
        from irmatch.errors import NonFiniteScore

        def explode(*args, **kwargs):
            raise NonFiniteScore("score is not finite")

        monkeypatch.setattr(training_mod, "forward_batch", explode)
        tc = TrainConfig(lr=1e-3, epochs=1, patience=10, dropout=0.0, seed=0)
        with pytest.raises(NonFiniteLoss) as err:
            train(pairs, pairs, cfg, tc)
        assert "g0.pgraph" in str(err.value)
        assert "epoch 1" in str(err.value)

    def test_resume_from_given_params(self, vocab):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        tc = TrainConfig(lr=5e-3, epochs=3, patience=100, dropout=0.0, seed=0)
        p1, _ = train(pairs, pairs, cfg, tc)
        p2, r2 = train(pairs, pairs, cfg, tc, params=p1)
        assert r2.epochs_run == 3


class TestEncodeAndEval:
    def test_encode_pairs_caches(self, vocab, tmp_path):
        rng = np.random.default_rng(1)
        ga, gb = random_graph(rng, 5, 8), random_graph(rng, 5, 8)
        pa, pb = str(tmp_path / "a.pgraph"), str(tmp_path / "b.pgraph")
        save_graph(ga, pa)
        save_graph(gb, pb)
        pairs = [PairSample(a=pa, b=pb, label=1),
                 PairSample(a=pb, b=pa, label=0)]
        cache = {}
        enc = encode_pairs(pairs, vocab, cache)
        assert len(cache) == 2
        assert enc[0].a is enc[1].b
        assert enc[0].size_gap == abs(len(ga.nodes) - len(gb.nodes))

    def test_evaluate_empty(self, vocab):
        cfg = tiny_config(vocab)
        params = init_parameters(cfg, seed=0)
        scores, loss = evaluate_pairs(params, [], cfg)
        assert scores.shape == (0,)
        assert loss == 0.0

    def test_evaluate_batching_invariant(self, vocab):
        pairs = toy_pairs(vocab)
        cfg = tiny_config(vocab)
        params = init_parameters(cfg, seed=2)
        s1, _ = evaluate_pairs(params, pairs, cfg, batch_size=3)
        s2, _ = evaluate_pairs(params, pairs, cfg, batch_size=len(pairs))
        np.testing.assert_allclose(s1, s2, atol=1e-9)

    def test_history_csv(self, tmp_path):
        history = [{"epoch": 1, "train_loss": 0.7, "train_f1": 0.5,
                    "val_loss": 0.71, "val_f1": 0.4}]
        path = tmp_path / "history.csv"
        write_history_csv(history, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(HISTORY_COLUMNS)
        assert lines[1].startswith("1,0.700000,")
