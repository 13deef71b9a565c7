"""Throughput benchmark: feature extraction (cold/warm cache) and training steps."""
from __future__ import annotations

import dataclasses
import platform
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, build_alphabet
from .features import Featurizer, collect_ngram_stats
from .model import ModelConfig
from .training import TrainConfig, Trainer


@dataclass
class BenchReport:
    featurize_cold: float
    featurize_warm: float
    train_step: float
    sentences: int
    hardware: str

    def dumps(self) -> str:
        return (f"sentences\t{self.sentences}\n"
                f"featurize_cold_sent_per_sec\t{self.featurize_cold:.1f}\n"
                f"featurize_warm_sent_per_sec\t{self.featurize_warm:.1f}\n"
                f"train_sent_per_sec\t{self.train_step:.1f}\n"
                f"hardware\t{self.hardware}\n")


def hardware_note() -> str:
    return f"{platform.machine()} {platform.processor() or platform.system()}; python {platform.python_version()}; numpy {np.__version__}"


def _rate(n, fn):
    t0 = time.perf_counter()
    fn()
    return n / max(time.perf_counter() - t0, 1e-9)


def bench_featurize(sentences, featurizer: Featurizer, repeats=3):
    """Median (cold, warm) sentences/sec; the cache is cleared before each cold pass."""

    def run():
        for s in sentences:
            featurizer.matrix(s.words)

    cold, warm = [], []
    for _ in range(repeats):
        featurizer.clear()
        cold.append(_rate(len(sentences), run))
        warm.append(_rate(len(sentences), run))
    return statistics.median(cold), statistics.median(warm)


def bench(dataset: Dataset, mcfg: ModelConfig, tcfg: TrainConfig, timed_epochs=3, repeats=3) -> BenchReport:
    sents = dataset.train
    stats = collect_ngram_stats(sents, mcfg.max_n)
    featurizer = Featurizer(stats, build_alphabet(sents), mcfg.pieces_k)
    cold, warm = bench_featurize(sents, featurizer, repeats)
    # one warmup epoch then timed epochs at a constant batch size
    epochs = 1 + max(timed_epochs, 3)
    trainer = Trainer(dataset, mcfg, dataclasses.replace(tcfg, epochs=epochs))
    trainer.tcfg = dataclasses.replace(trainer.tcfg, epochs=4 * epochs)
    trainer.run_epoch(0)
    rates = [trainer.run_epoch(e)[2] for e in range(1, epochs)]
    return BenchReport(cold, warm, statistics.median(rates), len(sents), hardware_note())
