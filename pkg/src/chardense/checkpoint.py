"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"chardense-ckpt-1\\n"
    u32 section count
    per section: u16 name length, name (utf-8), u64 payload length, u32 crc32, payload

The first section is ``manifest``: JSON listing the remaining section names.
Metadata sections are sorted-key JSON; each ``param/<name>`` section is
``u8 dtype code, u8 trainable, u8 ndim, u32 * ndim shape, raw data``.
"""
from __future__ import annotations

import io
import json
import struct
import zlib

import numpy as np

from . import nn
from .corpus import Alphabet, WordVocab
from .errors import (CheckpointChecksumError, CheckpointError,
                     CheckpointTruncatedError, CheckpointVersionError)
from .features import NgramStats
from .model import ModelConfig, Tagger

MAGIC = b"chardense-ckpt-"
VERSION = b"chardense-ckpt-1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def _pack_array(arr: np.ndarray, trainable: bool) -> bytes:
    dt = arr.dtype.newbyteorder("<")
    head = struct.pack("<BBB", _DTYPE_CODES[dt], int(trainable), arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=dt).tobytes()


def _unpack_array(buf: bytes):
    code, trainable, ndim = struct.unpack_from("<BBB", buf, 0)
    shape = struct.unpack_from(f"<{ndim}I", buf, 3)
    data = buf[3 + 4 * ndim:]
    dt = _DTYPES[code]
    arr = np.frombuffer(data, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    return arr, bool(trainable)


def dumps(model: Tagger, extra: dict | None = None) -> bytes:
    sections = [
        ("config", _json(model.config.to_dict())),
        ("vocab", _json(model.vocab.to_dict())),
        ("alphabet", _json(model.alphabet.to_dict())),
        ("ngrams", model.stats.dumps().encode("utf-8")),
        ("labels", _json(model.labels)),
    ]
    if extra:
        sections.append(("extra", _json(extra)))
    for name, p in model.store.items():
        sections.append((f"param/{name}", _pack_array(p.value, p.trainable)))
    manifest = ("manifest", _json([n for n, _ in sections]))
    out = io.BytesIO()
    out.write(VERSION + b"\n")
    out.write(struct.pack("<I", len(sections) + 1))
    for name, payload in [manifest, *sections]:
        nb = name.encode("utf-8")
        out.write(struct.pack("<H", len(nb)) + nb)
        out.write(struct.pack("<QI", len(payload), zlib.crc32(payload)))
        out.write(payload)
    return out.getvalue()


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointTruncatedError(f"checkpoint truncated at byte {len(self.buf)} (needed {self.pos + n})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def read_sections(buf: bytes) -> dict[str, bytes]:
    line_end = buf.find(b"\n", 0, 64)
    header = buf[:line_end] if line_end >= 0 else buf[:64]
    if not header.startswith(MAGIC):
        if len(buf) < len(VERSION) + 1 and VERSION.startswith(buf[:len(VERSION)]):
            raise CheckpointTruncatedError("checkpoint truncated inside header")
        raise CheckpointError("not a chardense checkpoint")
    if header != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {header.decode(errors='replace')!r}")
    r = _Reader(buf)
    r.take(len(VERSION) + 1)
    (count,) = struct.unpack("<I", r.take(4))
    sections = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", r.take(2))
        name = r.take(nlen).decode("utf-8", errors="replace")
        length, crc = struct.unpack("<QI", r.take(12))
        payload = r.take(length)
        if zlib.crc32(payload) != crc:
            raise CheckpointChecksumError(f"checksum mismatch in section {name!r}")
        sections[name] = payload
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after last section")
    manifest = json.loads(sections.pop("manifest"))
    if manifest != list(sections):
        raise CheckpointError("manifest does not match sections")
    return sections


def loads(buf: bytes) -> Tagger:
    sec = read_sections(buf)
    try:
        config = ModelConfig.from_dict(json.loads(sec["config"]))
        vocab = WordVocab.from_dict(json.loads(sec["vocab"]))
        alphabet = Alphabet.from_dict(json.loads(sec["alphabet"]))
        stats = NgramStats.loads(sec["ngrams"].decode("utf-8"))
        labels = json.loads(sec["labels"])
    except KeyError as exc:
        raise CheckpointError(f"missing section {exc.args[0]!r}") from None
    model = Tagger(config, vocab, alphabet, stats, labels)
    store = nn.ParameterStore(config.dtype)
    for name, payload in sec.items():
        if name.startswith("param/"):
            arr, trainable = _unpack_array(payload)
            store.add(name[len("param/"):], arr, trainable)
    model.store = store
    return model


def extra_metadata(buf: bytes) -> dict:
    sec = read_sections(buf)
    return json.loads(sec["extra"]) if "extra" in sec else {}


def save(model: Tagger, path, extra=None):
    data = dumps(model, extra)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def load(path) -> Tagger:
    with open(path, "rb") as fh:
        return loads(fh.read())
