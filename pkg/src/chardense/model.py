"""The tagger: char-dense features + word vectors -> Bi-LSTM stack -> softmax/CRF."""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import heads, nn
from .corpus import Alphabet, Sentence, WordVocab
from .features import Featurizer, NgramStats


@dataclass
class DropoutSpec:
    char_dense: float = 0.7
    word: float = 0.9
    rnn: float = 0.5
    dense: float = 0.5

    def __post_init__(self):
        for f in dataclasses.fields(self):
            p = getattr(self, f.name)
            if not 0 < p <= 1:
                raise ValueError(f"dropout keep probability {f.name}={p} outside (0, 1]")


@dataclass
class ModelConfig:
    char_layer_size: int = 50
    pieces_k: int = 2
    word_dim: int = 300
    rnn_size: int = 350
    rnn_depth: int = 2
    pre_rnn_size: int | None = 350
    post_rnn_size: int | None = 350
    head: str = "softmax"
    dropout: DropoutSpec = field(default_factory=DropoutSpec)
    max_n: int = 8
    lowercase: bool = True
    use_char: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if isinstance(self.dropout, dict):
            self.dropout = DropoutSpec(**self.dropout)
        if self.head not in ("softmax", "crf"):
            raise ValueError(f"head must be softmax or crf, got {self.head!r}")
        if self.rnn_depth < 1:
            raise ValueError("rnn_depth must be >= 1")
        for name in ("char_layer_size", "pieces_k", "word_dim", "rnn_size", "max_n"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("pre_rnn_size", "post_rnn_size"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive or absent")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


PRESETS = {
    "slot": dict(rnn_depth=2, pre_rnn_size=350, post_rnn_size=350),
    "pos": dict(rnn_depth=3, pre_rnn_size=350, post_rnn_size=350),
    "ner": dict(rnn_depth=3, pre_rnn_size=None, post_rnn_size=None),
}


def preset(task: str, **overrides) -> ModelConfig:
    return ModelConfig(**{**PRESETS[task], **overrides})


def char_dense_feature(sparse, W, b):
    """Single hidden ReLU layer over the sparse character vector."""
    return nn.dense(sparse, W, b, "relu")[0]


def compose_input(word_vec, char_vec):
    return np.concatenate([word_vec, char_vec], axis=-1)


@dataclass
class Batch:
    word_ids: np.ndarray
    chars: np.ndarray
    mask: np.ndarray
    lengths: np.ndarray
    tags: np.ndarray | None = None


class Tagger:
    def __init__(self, config: ModelConfig, vocab: WordVocab, alphabet: Alphabet,
                 stats: NgramStats, labels: Sequence[str], store: nn.ParameterStore | None = None):
        self.config = config
        self.vocab = vocab
        self.alphabet = alphabet
        self.stats = stats
        self.labels = list(labels)
        self.label_index = {t: i for i, t in enumerate(self.labels)}
        self.featurizer = Featurizer(stats, alphabet, config.pieces_k)
        self.dtype = np.dtype(config.dtype)
        self.store = store

    @property
    def num_labels(self):
        return len(self.labels)

    def _layer_dims(self):
        c = self.config
        d = c.word_dim + c.char_layer_size
        if c.pre_rnn_size:
            d = c.pre_rnn_size
        dims = []
        for _ in range(c.rnn_depth):
            dims.append(d)
            d = c.rnn_size
        return dims

    def residual(self, layer: int) -> bool:
        return self.config.rnn_depth > 1 and self._layer_dims()[layer] == self.config.rnn_size

    def init_params(self, seed: int, embeddings: np.ndarray | None = None):
        c = self.config
        rng = np.random.default_rng([seed, 1])
        s = nn.ParameterStore(self.dtype)
        f64 = np.float64
        s.add("char/W", nn.glorot_uniform(rng, self.featurizer.dim, c.char_layer_size, f64))
        s.add("char/b", np.zeros(c.char_layer_size))
        if embeddings is None:
            from .corpus import init_embeddings
            embeddings = init_embeddings(self.vocab, c.word_dim, seed)
        if embeddings.shape != (len(self.vocab), c.word_dim):
            raise ValueError(f"embedding matrix shape {embeddings.shape} != {(len(self.vocab), c.word_dim)}")
        s.add("embed", embeddings)
        d = c.word_dim + c.char_layer_size
        if c.pre_rnn_size:
            s.add("pre/W", nn.glorot_uniform(rng, d, c.pre_rnn_size, f64))
            s.add("pre/b", np.zeros(c.pre_rnn_size))
        for layer, din in enumerate(self._layer_dims()):
            for direction in ("fwd", "bwd"):
                for k, v in nn.init_lstm(rng, din, c.rnn_size, f64).items():
                    s.add(f"rnn{layer}/{direction}/{k}", v)
        d = c.rnn_size
        if c.post_rnn_size:
            s.add("post/W", nn.glorot_uniform(rng, d, c.post_rnn_size, f64))
            s.add("post/b", np.zeros(c.post_rnn_size))
            d = c.post_rnn_size
        s.add("proj/W", nn.glorot_uniform(rng, d, self.num_labels, f64))
        s.add("proj/b", np.zeros(self.num_labels))
        if c.head == "crf":
            s.add("crf/trans", heads.init_transitions(self.num_labels))
        self.store = s
        return s

    def _lstm(self, layer, direction):
        p = f"rnn{layer}/{direction}/"
        return {k: self.store[p + k] for k in ("Wx", "Wh", "b")}

    # -- batching -----------------------------------------------------------

    def make_batch(self, sentences: Sequence[Sentence], with_tags=True) -> Batch:
        B = len(sentences)
        lengths = np.array([len(s) for s in sentences])
        T = int(lengths.max())
        ids = np.full((B, T), self.vocab.oov_index, dtype=np.int64)
        chars = np.zeros((B, T, self.featurizer.dim), dtype=self.dtype)
        mask = np.zeros((B, T), dtype=self.dtype)
        tags = np.zeros((B, T), dtype=np.int64) if with_tags else None
        for b, sent in enumerate(sentences):
            n = len(sent)
            ids[b, :n] = self.vocab.encode(sent.words)
            chars[b, :n] = self.featurizer.matrix(sent.words)
            mask[b, :n] = 1
            if with_tags:
                tags[b, :n] = [self.label_index[t] for t in sent.tags]
        return Batch(ids, chars, mask, lengths, tags)

    def sample_masks(self, lengths, T, rngs):
        """Draw every dropout mask for a batch, one generator per sentence."""
        c, dp, dt = self.config, self.config.dropout, self.dtype
        H = c.rnn_size
        B = len(lengths)
        out = {
            "char": np.ones((B, T, c.char_layer_size), dt),
            "word": np.ones((B, T, 1), dt),
            "pre": np.ones((B, T, c.pre_rnn_size or 1), dt),
            "post": np.ones((B, T, c.post_rnn_size or 1), dt),
            "rnn": np.ones((c.rnn_depth, 2, B, H), dt),
        }
        for b, (n, rng) in enumerate(zip(lengths, rngs)):
            out["char"][b, :n] = nn.dropout_mask((n, c.char_layer_size), dp.char_dense, rng, dt)
            out["word"][b, :n] = nn.dropout_mask((n, 1), dp.word, rng, dt)
            if c.pre_rnn_size:
                out["pre"][b, :n] = nn.dropout_mask((n, c.pre_rnn_size), dp.dense, rng, dt)
            for layer in range(c.rnn_depth):
                for d in range(2):
                    out["rnn"][layer, d, b] = nn.variational_mask(H, dp.rnn, rng, dt)
            if c.post_rnn_size:
                out["post"][b, :n] = nn.dropout_mask((n, c.post_rnn_size), dp.dense, rng, dt)
        return out

    # -- forward / backward -------------------------------------------------

    def encode(self, batch: Batch, masks=None):
        """Per-token label scores of shape (B, T, L) plus a cache for backward."""
        c, s = self.config, self.store
        mask3 = batch.mask[..., None]
        cache = {"masks": masks, "batch": batch}
        chars = batch.chars if c.use_char else np.zeros_like(batch.chars)
        cd, cache["char"] = nn.dense(chars, s["char/W"], s["char/b"], "relu")
        word = s["embed"][batch.word_ids]
        if masks is not None:
            cd = cd * masks["char"]
            word = word * masks["word"]
        h = compose_input(word, cd) * mask3
        if c.pre_rnn_size:
            h, cache["pre"] = nn.dense(h, s["pre/W"], s["pre/b"], "relu")
            if masks is not None:
                h = h * masks["pre"]
        cache["rnn"] = []
        for layer in range(c.rnn_depth):
            rm = (None, None) if masks is None else (masks["rnn"][layer, 0], masks["rnn"][layer, 1])
            out, lc = nn.bilstm(h, self._lstm(layer, "fwd"), self._lstm(layer, "bwd"),
                                batch.mask, batch.lengths, rm)
            if self.residual(layer):
                out = out + h
            cache["rnn"].append(lc)
            h = out
        if c.post_rnn_size:
            h, cache["post"] = nn.dense(h, s["post/W"], s["post/b"], "relu")
            if masks is not None:
                h = h * masks["post"]
        scores, cache["proj"] = nn.dense(h, s["proj/W"], s["proj/b"])
        return scores, cache

    def backward(self, dscores, cache, embed_grad=True):
        c, s = self.config, self.store
        masks, batch = cache["masks"], cache["batch"]
        dh, dW, db = nn.dense_backward(dscores, cache["proj"])
        s.accumulate("proj/W", dW)
        s.accumulate("proj/b", db)
        if c.post_rnn_size:
            if masks is not None:
                dh = dh * masks["post"]
            dh, dW, db = nn.dense_backward(dh, cache["post"])
            s.accumulate("post/W", dW)
            s.accumulate("post/b", db)
        for layer in range(c.rnn_depth - 1, -1, -1):
            dx, gf, gb = nn.bilstm_backward(dh, self._lstm(layer, "fwd"), self._lstm(layer, "bwd"),
                                            cache["rnn"][layer])
            for direction, g in (("fwd", gf), ("bwd", gb)):
                for k, v in g.items():
                    s.accumulate(f"rnn{layer}/{direction}/{k}", v)
            if self.residual(layer):
                dx = dx + dh
            dh = dx
        if c.pre_rnn_size:
            if masks is not None:
                dh = dh * masks["pre"]
            dh, dW, db = nn.dense_backward(dh, cache["pre"])
            s.accumulate("pre/W", dW)
            s.accumulate("pre/b", db)
        dh = dh * batch.mask[..., None]
        wd = c.word_dim
        dword, dcd = dh[..., :wd], dh[..., wd:]
        if masks is not None:
            dword = dword * masks["word"]
            dcd = dcd * masks["char"]
        _, dW, db = nn.dense_backward(dcd, cache["char"])
        s.accumulate("char/W", dW)
        s.accumulate("char/b", db)
        if embed_grad:
            valid = batch.mask > 0
            np.add.at(s.grad("embed"), batch.word_ids[valid], dword[valid])

    def loss(self, scores, batch: Batch):
        """Return (loss, d_scores, d_transitions).

        Softmax: token-mean cross entropy, no transition gradient.
        CRF: sentence-mean negative log-likelihood.
        """
        if self.config.head == "softmax":
            loss, dscores = heads.softmax_nll(scores, batch.tags, batch.mask)
            return loss, dscores, None
        trans = self.store["crf/trans"].astype(np.float64)
        B = len(batch.lengths)
        dscores = np.zeros_like(scores)
        dtrans = np.zeros(trans.shape, dtype=np.float64)
        total = 0.0
        for b, n in enumerate(batch.lengths):
            ll, d_em, d_tr = heads.crf_log_likelihood(scores[b, :n].astype(np.float64),
                                                      batch.tags[b, :n], trans, with_grad=True)
            total -= ll
            dscores[b, :n] = -d_em / B
            dtrans -= d_tr / B
        return float(total / B), dscores, dtrans

    def loss_and_grad(self, batch: Batch, masks=None, embed_grad=True):
        """Forward, loss and backward; gradients are added to the parameter store."""
        scores, cache = self.encode(batch, masks)
        loss, dscores, dtrans = self.loss(scores, batch)
        if dtrans is not None:
            self.store.accumulate("crf/trans", dtrans.astype(self.dtype))
        self.backward(dscores, cache, embed_grad)
        return loss

    # -- inference ----------------------------------------------------------

    def decode(self, scores, lengths):
        if self.config.head == "softmax":
            pred = heads.softmax_predict(scores)
            return [pred[b, :n] for b, n in enumerate(lengths)]
        trans = self.store["crf/trans"].astype(np.float64)
        return [heads.viterbi_decode(scores[b, :n].astype(np.float64), trans)[0]
                for b, n in enumerate(lengths)]

    def predict_ids(self, sentences: Sequence[Sentence], batch_size=64, threads=1) -> list[np.ndarray]:
        chunks = [sentences[i:i + batch_size] for i in range(0, len(sentences), batch_size)]

        def run(chunk):
            batch = self.make_batch(chunk, with_tags=False)
            scores, _ = self.encode(batch)
            return self.decode(scores, batch.lengths)

        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(threads) as ex:
                results = list(ex.map(run, chunks))
        else:
            results = [run(ch) for ch in chunks]
        return [p for r in results for p in r]

    def tag(self, sentences: Sequence[Sentence], batch_size=64, threads=1) -> list[list[str]]:
        return [[self.labels[i] for i in p] for p in self.predict_ids(sentences, batch_size, threads)]
