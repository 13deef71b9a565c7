import dataclasses

import numpy as np
import pytest

from chardense import checkpoint
from chardense.bench import bench
from chardense.corpus import Dataset
from chardense.errors import NumericError
from chardense.model import ModelConfig
from chardense.toy import toy_dataset
from chardense.training import (ExperimentReport, SeedRun, TrainConfig, Trainer, batch_size_at,
                                embeddings_frozen_at, freeze_steps, multi_seed, oov_swap,
                                total_steps, train)

TINY = ModelConfig(rnn_size=8, word_dim=6, char_layer_size=5, pre_rnn_size=8, post_rnn_size=8)


@pytest.fixture(scope="module")
def ds():
    return toy_dataset(n_train=24, n_dev=6, n_test=6)


def test_batch_schedule_quarters():
    sizes = [batch_size_at(e, 100, 8) for e in range(100)]
    assert sizes[:25] == [8] * 25 and sizes[25:50] == [16] * 25
    assert sizes[50:75] == [32] * 25 and sizes[75:] == [64] * 25
    assert [batch_size_at(e, 4, 16) for e in range(4)] == [16, 32, 64, 128]
    assert [batch_size_at(e, 3, 1) for e in range(3)] == [1, 2, 4]
    with pytest.raises(ValueError):
        batch_size_at(100, 100, 8)


def test_freeze_boundary():
    assert freeze_steps(1000, 0.2) == 200
    assert embeddings_frozen_at(199, 1000, 0.2)
    assert not embeddings_frozen_at(200, 1000, 0.2)
    assert freeze_steps(7, 0.2) == 2
    assert freeze_steps(10, 0.0) == 0
    assert freeze_steps(10, 1.0) == 10


def test_total_steps():
    assert total_steps(20, 4, 8) == 3 + 2 + 1 + 1


def test_oov_swap_rate():
    ids = np.zeros(1_000_000, dtype=np.int64)
    out = oov_swap(ids, 0.01, np.random.default_rng(0), 99)
    rate = (out == 99).mean()
    assert abs(rate - 0.01) < 0.0005
    assert oov_swap(ids, 0.0, None, 99) is ids


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(t_freeze=1.5)
    with pytest.raises(ValueError):
        TrainConfig(metric="bleu")


def test_embeddings_frozen_then_updated(ds):
    tcfg = TrainConfig(epochs=4, initial_batch=4, seed=1)
    tr = Trainer(ds, TINY, tcfg)
    frozen_for = freeze_steps(tr.total_steps, tcfg.t_freeze)
    start = tr.model.store["embed"].copy()
    other = tr.model.store["proj/W"].copy()
    steps = 0
    for epoch in range(tcfg.epochs):
        order = np.arange(len(tr.train_sents))
        bs = batch_size_at(epoch, tcfg.epochs, tcfg.initial_batch)
        for i in range(0, len(order), bs):
            idx = order[i:i + bs]
            tr.train_step([tr.train_sents[j] for j in idx], idx, epoch)
            steps += 1
            if steps <= frozen_for:
                assert tr.model.store["embed"].tobytes() == start.tobytes()
    assert steps == tr.total_steps
    assert not np.array_equal(tr.model.store["embed"], start)
    assert not np.array_equal(tr.model.store["proj/W"], other)


def test_training_is_deterministic(ds):
    tcfg = TrainConfig(epochs=3, initial_batch=4, seed=5)
    a, la = train(ds, TINY, tcfg)
    b, lb = train(ds, TINY, tcfg)
    assert a == b
    assert la.deterministic() == lb.deterministic()
    c, _ = train(ds, TINY, dataclasses.replace(tcfg, seed=6))
    assert c != a


def test_best_checkpoint_is_best_dev(ds):
    ckpt, log = train(ds, TINY, TrainConfig(epochs=4, initial_batch=4))
    meta = checkpoint.extra_metadata(ckpt)
    assert meta["epoch"] == log.best_epoch
    assert log.best_dev == max(e.dev_metric for e in log.entries)
    assert log.best_dev >= log.entries[-1].dev_metric
    assert [e.batch_size for e in log.entries] == [4, 8, 16, 32]
    model = checkpoint.loads(ckpt)
    pred = model.tag(ds.dev)
    gold = [list(s.tags) for s in ds.dev]
    from chardense.metrics import token_accuracy
    assert token_accuracy(gold, pred) == pytest.approx(meta["dev_metric"])
    assert len(log.dumps().splitlines()) == 4


def test_dev_split_when_missing(ds):
    no_dev = Dataset(ds.train, labels=ds.labels)
    tr = Trainer(no_dev, TINY, TrainConfig(epochs=1))
    assert len(tr.dev) == round(0.2 * len(ds.train))
    assert len(tr.dev) + len(tr.train_sents) == len(ds.train)
    assert not set(tr.dev) & set(tr.train_sents)


def test_nonfinite_loss_raises(ds, monkeypatch):
    tr = Trainer(ds, TINY, TrainConfig(epochs=2))
    monkeypatch.setattr(tr.model, "loss_and_grad", lambda *a, **k: float("nan"))
    with pytest.raises(NumericError, match="epoch 1 batch 0"):
        tr.run_epoch(1)


def test_experiment_report_population_sd():
    rep = ExperimentReport("accuracy", [SeedRun(0, 1.0), SeedRun(1, 3.0), SeedRun(2, None, "boom")])
    assert rep.mean == 2.0
    assert rep.sd == 1.0
    text = rep.dumps()
    assert "2.00 (SD 1.00)" in text and "FAILED: boom" in text and "n=2" in text


def test_multi_seed_excludes_failures(ds, monkeypatch):
    from chardense import training
    real = training.train

    def flaky(dataset, mcfg, tcfg, progress=None):
        if tcfg.seed == 1:
            raise NumericError("diverged")
        return real(dataset, mcfg, tcfg, progress)

    monkeypatch.setattr(training, "train", flaky)
    rep = multi_seed(3, ds, TINY, TrainConfig(epochs=1))
    assert [r.seed for r in rep.runs] == [0, 1, 2]
    assert rep.runs[1].metric is None
    assert len(rep.values) == 2


def test_bench_report(ds):
    rep = bench(ds, TINY, TrainConfig(epochs=4), timed_epochs=3, repeats=3)
    assert rep.featurize_cold > 0 and rep.featurize_warm > 0 and rep.train_step > 0
    assert rep.featurize_warm > rep.featurize_cold
    assert rep.sentences == len(ds.train)
    assert "numpy" in rep.dumps()
