"""Training loop, schedules and the multi-seed experiment protocol."""
from __future__ import annotations

import dataclasses
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint, nn
from .corpus import Dataset, build_alphabet, build_vocab, init_embeddings, load_embeddings
from .errors import ChardenseError, DataError, NumericError
from .features import collect_ngram_stats
from .metrics import score
from .model import ModelConfig, Tagger

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    initial_batch: int = 8
    epochs: int = 100
    t_freeze: float = 0.2
    oov_swap_p: float = 0.01
    seed: int = 0
    lr: float = 0.001
    metric: str = "accuracy"
    clip_norm: float | None = None
    embeddings: str | None = None
    dev_fraction: float = 0.2

    def __post_init__(self):
        if not 0 <= self.t_freeze <= 1:
            raise ValueError("t_freeze must be in [0, 1]")
        if not 0 <= self.oov_swap_p <= 1:
            raise ValueError("oov_swap_p must be in [0, 1]")
        if self.initial_batch < 1:
            raise ValueError("initial_batch must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.metric not in ("accuracy", "f1"):
            raise ValueError("metric must be accuracy or f1")


def batch_size_at(epoch: int, total_epochs: int, initial: int) -> int:
    """Double the batch size at each quarter of training (epoch granular)."""
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    return initial * 2 ** (4 * epoch // total_epochs)


def freeze_steps(total_steps: int, t_freeze: float) -> int:
    # round() guards against products like 0.2 * 1000 landing just above an integer
    return math.ceil(round(t_freeze * total_steps, 9))


def embeddings_frozen_at(step: int, total_steps: int, t_freeze: float) -> bool:
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    return step < freeze_steps(total_steps, t_freeze)


def total_steps(n_sentences: int, epochs: int, initial: int) -> int:
    return sum(math.ceil(n_sentences / batch_size_at(e, epochs, initial)) for e in range(epochs))


def oov_swap(ids: np.ndarray, p: float, rng, oov_index: int) -> np.ndarray:
    if p == 0:
        return ids
    swap = rng.random(ids.shape) < p
    return np.where(swap, oov_index, ids)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    dev_metric: float
    batch_size: int
    sent_per_sec: float


@dataclass
class TrainLog:
    entries: list[EpochLog] = field(default_factory=list)
    best_epoch: int = -1
    best_dev: float = float("-inf")

    def dumps(self, timing=True) -> str:
        out = io.StringIO()
        for e in self.entries:
            sps = f"{e.sent_per_sec:.1f}" if timing else "-"
            out.write(f"{e.epoch}\t{e.loss:.6f}\t{e.dev_metric:.4f}\t{e.batch_size}\t{sps}\n")
        return out.getvalue()

    def deterministic(self):
        return [(e.epoch, e.loss, e.dev_metric, e.batch_size) for e in self.entries]


def _dev_split(dataset: Dataset, fraction: float, seed: int):
    if dataset.dev:
        return dataset.train, dataset.dev
    n = len(dataset.train)
    n_dev = int(round(fraction * n))
    if n_dev < 1 or n_dev >= n:
        raise DataError("need a dev split or at least two training sentences")
    order = np.random.default_rng([seed, 4]).permutation(n)
    dev_idx = set(order[:n_dev].tolist())
    train = [s for i, s in enumerate(dataset.train) if i not in dev_idx]
    dev = [s for i, s in enumerate(dataset.train) if i in dev_idx]
    log.info("no dev split given: holding out %d of %d training sentences", n_dev, n)
    return train, dev


def build_model(dataset: Dataset, mcfg: ModelConfig, tcfg: TrainConfig, train_sents=None) -> Tagger:
    train_sents = dataset.train if train_sents is None else train_sents
    vocab = build_vocab(train_sents, lowercase=mcfg.lowercase)
    alphabet = build_alphabet(train_sents)
    stats = collect_ngram_stats(train_sents, mcfg.max_n)
    model = Tagger(mcfg, vocab, alphabet, stats, dataset.labels)
    if tcfg.embeddings:
        emb = load_embeddings(tcfg.embeddings, vocab, mcfg.word_dim, tcfg.seed, np.dtype(mcfg.dtype))
    else:
        emb = init_embeddings(vocab, mcfg.word_dim, tcfg.seed, np.dtype(mcfg.dtype))
    model.init_params(tcfg.seed, emb)
    return model


def evaluate(model: Tagger, sentences, metric="accuracy") -> float:
    pred = model.tag(sentences)
    return score([list(s.tags) for s in sentences], pred, metric)


def _clip(store: nn.ParameterStore, max_norm: float):
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for _, p in store.items() if p.trainable))
    if total > max_norm:
        for _, p in store.items():
            p.grad *= max_norm / total


class Trainer:
    """Owns the model, optimizer state and step counter for one training run."""

    def __init__(self, dataset: Dataset, mcfg: ModelConfig, tcfg: TrainConfig):
        self.tcfg = tcfg
        self.train_sents, self.dev = _dev_split(dataset, tcfg.dev_fraction, tcfg.seed)
        self.model = build_model(dataset, mcfg, tcfg, self.train_sents)
        self.adam = nn.AdamState(lr=tcfg.lr)
        self.total_steps = total_steps(len(self.train_sents), tcfg.epochs, tcfg.initial_batch)
        self.step = 0
        for s in self.train_sents:
            self.model.featurizer.matrix(s.words)

    def train_step(self, sents, idx, epoch, batch_index=0) -> float:
        model, store, tcfg = self.model, self.model.store, self.tcfg
        batch = model.make_batch(sents)
        rngs = [np.random.default_rng([tcfg.seed, 3, epoch, int(i)]) for i in idx]
        oov = model.vocab.oov_index
        for b, (rng, s) in enumerate(zip(rngs, sents)):
            k = len(s)
            batch.word_ids[b, :k] = oov_swap(batch.word_ids[b, :k], tcfg.oov_swap_p, rng, oov)
        masks = model.sample_masks(batch.lengths, batch.word_ids.shape[1], rngs)
        frozen = embeddings_frozen_at(self.step, self.total_steps, tcfg.t_freeze)
        store.set_trainable("embed", not frozen)
        store.zero_grad()
        loss = model.loss_and_grad(batch, masks, embed_grad=not frozen)
        if not math.isfinite(loss):
            norms = ", ".join(f"{k}={v:.3g}" for k, v in store.norms().items())
            raise NumericError(f"non-finite loss at epoch {epoch} batch {batch_index} (step {self.step}); "
                               f"parameter norms: {norms}")
        if tcfg.clip_norm:
            _clip(store, tcfg.clip_norm)
        nn.adam_step(store, self.adam)
        self.step += 1
        return loss

    def run_epoch(self, epoch: int) -> tuple[float, int, float]:
        """One shuffled pass; returns (mean loss, batch size, sentences/sec)."""
        tcfg = self.tcfg
        n = len(self.train_sents)
        bs = batch_size_at(epoch, tcfg.epochs, tcfg.initial_batch)
        order = np.random.default_rng([tcfg.seed, 2, epoch]).permutation(n)
        t0 = time.perf_counter()
        losses = []
        for bi, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            losses.append(self.train_step([self.train_sents[i] for i in idx], idx, epoch, bi))
        elapsed = time.perf_counter() - t0
        self.model.store.set_trainable("embed", True)
        return float(np.mean(losses)), bs, n / max(elapsed, 1e-9)


def train(dataset: Dataset, mcfg: ModelConfig, tcfg: TrainConfig, progress=None):
    """Train and return (best-dev checkpoint bytes, TrainLog)."""
    trainer = Trainer(dataset, mcfg, tcfg)
    model = trainer.model
    trainlog = TrainLog()
    best = None
    for epoch in range(tcfg.epochs):
        loss, bs, sps = trainer.run_epoch(epoch)
        dev_metric = evaluate(model, trainer.dev, tcfg.metric)
        entry = EpochLog(epoch, loss, dev_metric, bs, sps)
        trainlog.entries.append(entry)
        if dev_metric > trainlog.best_dev:
            trainlog.best_dev = dev_metric
            trainlog.best_epoch = epoch
            best = checkpoint.dumps(model, {"epoch": epoch, "dev_metric": dev_metric, "seed": tcfg.seed})
        if progress is not None:
            progress(entry)
        log.info("epoch %d loss %.4f dev %.2f batch %d %.1f sent/s", epoch, loss, dev_metric, bs, sps)
    return best, trainlog


@dataclass
class SeedRun:
    seed: int
    metric: float | None
    error: str | None = None


@dataclass
class ExperimentReport:
    metric_name: str
    runs: list[SeedRun]

    @property
    def values(self):
        return [r.metric for r in self.runs if r.metric is not None]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def sd(self) -> float:
        """Population standard deviation (divides by n)."""
        return float(np.std(self.values))

    def dumps(self) -> str:
        out = io.StringIO()
        out.write("seed\tmetric\n")
        for r in self.runs:
            out.write(f"{r.seed}\t{'FAILED: ' + r.error if r.metric is None else f'{r.metric:.4f}'}\n")
        ok = self.values
        if len(ok) >= 2:
            out.write(f"{self.metric_name}\t{self.mean:.2f} (SD {self.sd:.2f})\tn={len(ok)}\n")
        else:
            out.write(f"{self.metric_name}\tinsufficient successful runs (n={len(ok)})\n")
        return out.getvalue()


def multi_seed(n_seeds: int, dataset: Dataset, mcfg: ModelConfig, tcfg: TrainConfig) -> ExperimentReport:
    if n_seeds < 2:
        raise ValueError("need at least two seeds")
    test = dataset.test or dataset.dev
    if not test:
        raise DataError("experiment needs a test or dev split")
    runs = []
    for seed in range(tcfg.seed, tcfg.seed + n_seeds):
        cfg = dataclasses.replace(tcfg, seed=seed)
        try:
            ckpt, _ = train(dataset, mcfg, cfg)
            model = checkpoint.loads(ckpt)
            runs.append(SeedRun(seed, evaluate(model, test, tcfg.metric)))
        except ChardenseError as exc:
            log.warning("seed %d failed and is excluded: %s", seed, exc)
            runs.append(SeedRun(seed, None, str(exc)))
    return ExperimentReport(tcfg.metric, runs)
