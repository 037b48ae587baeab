"""Hashed bag-of-n-grams linear sentiment classifier.

Documents are tokenized, every token and every contiguous word n-gram is
hashed (FNV-1a 64) into ``buckets`` rows of an embedding table, the rows are
averaged into a document vector, and a 3-way softmax sits on top. Training is
plain per-example SGD with a linearly decaying learning rate.

Only embedding rows touched during training are stored. Every other row
keeps its initial value, which is a pure function of ``(seed, row, column)``
(splitmix64), so a saved model is exact without writing the full
``buckets x dim`` table.
"""

from __future__ import annotations

import re
import struct
import zlib
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    CorruptModel,
    EmptyCorpus,
    EmptySet,
    EmptyText,
    IoError,
    MissingLabel,
    VersionMismatch,
)

__all__ = [
    "LABELS",
    "TrainParams",
    "TextClassifierModel",
    "Prediction",
    "Evaluation",
    "fnv1a64",
    "tokenize",
    "featurize",
    "train",
    "predict",
    "evaluate",
    "save_model",
    "load_model",
    "read_corpus",
    "FastTextClassifier",
]

LABELS = ("neutral", "positive", "negative")
MAGIC = b"CCFT"
FORMAT_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_CJK_CHAR = re.compile("[一-鿿]")
_NON_ALNUM = re.compile(r"[\W_]+")


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 18)
def _hash_token(token: str) -> int:
    return fnv1a64(token.encode("utf-8"))


def _english_tokens(text: str) -> list[str]:
    return [t for t in _NON_ALNUM.split(text.lower()) if t]


def tokenize(text: str, lang_mode: str = "auto") -> list[str]:
    """Split ``text`` into tokens.

    english: lowercase, split on non-alphanumeric runs. chinese: one token per
    CJK ideograph, everything between them tokenized as english. auto picks
    chinese when the text holds at least two CJK ideographs.
    """
    if not text or not text.strip():
        raise EmptyText("cannot tokenize empty text")
    if lang_mode == "auto":
        lang_mode = "chinese" if len(_CJK_CHAR.findall(text)) >= 2 else "english"
    if lang_mode == "english":
        return _english_tokens(text)
    if lang_mode != "chinese":
        raise ValueError(f"unknown lang_mode {lang_mode!r}")
    out: list[str] = []
    pos = 0
    for m in _CJK_CHAR.finditer(text):
        out.extend(_english_tokens(text[pos:m.start()]))
        out.append(m.group())
        pos = m.end()
    out.extend(_english_tokens(text[pos:]))
    return out


@dataclass(frozen=True)
class TrainParams:
    dim: int = 100
    lr: float = 0.1
    epochs: int = 5
    ngram_order: int = 2
    buckets: int = 2 ** 21
    seed: int = 42
    min_count: int = 1

    def __post_init__(self):
        if self.dim < 1 or self.epochs < 1 or self.ngram_order < 1 or self.buckets < 1 or self.min_count < 1:
            raise ValueError(f"invalid training parameters: {self}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.buckets > 0xFFFFFFFF:
            raise ValueError("buckets must fit in 32 bits")


def featurize(tokens: Sequence[str], params: TrainParams) -> list[int]:
    """Bucket ids of every unigram plus every n-gram of order 2..ngram_order."""
    b = params.buckets
    ids = [_hash_token(t) % b for t in tokens]
    for n in range(2, params.ngram_order + 1):
        for i in range(len(tokens) - n + 1):
            ids.append(_hash_token(" ".join(tokens[i:i + n])) % b)
    return ids


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def initial_rows(row_ids: np.ndarray, params: TrainParams) -> np.ndarray:
    """Initial embedding rows, uniform in [-1/dim, 1/dim)."""
    rows = np.asarray(row_ids, dtype=np.uint64)
    cols = np.arange(params.dim, dtype=np.uint64)
    seed = np.uint64(params.seed & _MASK64)
    with np.errstate(over="ignore"):
        key = _splitmix64(seed ^ _splitmix64(rows[:, None] * np.uint64(params.dim) + cols[None, :]))
    unit = (key >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    return ((2.0 * unit - 1.0) / params.dim).astype(np.float32)


@dataclass
class TextClassifierModel:
    params: TrainParams
    row_ids: np.ndarray  # sorted uint32 bucket ids of the stored rows
    rows: np.ndarray  # float32, len(row_ids) x dim
    output_weights: np.ndarray  # float32, 3 x dim
    output_bias: np.ndarray  # float32, 3
    labels: tuple[str, ...] = LABELS
    lang_mode: str = "auto"
    format_version: int = FORMAT_VERSION

    def embeddings(self, ids: Sequence[int]) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        out = np.empty((len(ids), self.params.dim), dtype=np.float32)
        pos = np.searchsorted(self.row_ids, ids)
        pos_c = np.minimum(pos, max(len(self.row_ids) - 1, 0))
        found = (pos < len(self.row_ids)) & (self.row_ids[pos_c] == ids) if len(self.row_ids) else np.zeros(len(ids), bool)
        if found.any():
            out[found] = self.rows[pos_c[found]]
        if (~found).any():
            out[~found] = initial_rows(ids[~found], self.params)
        return out

    def document_vector(self, text: str) -> np.ndarray:
        ids = featurize(tokenize(text, self.lang_mode), self.params)
        if not ids:
            return np.zeros(self.params.dim)
        return self.embeddings(ids).astype(np.float64).mean(axis=0)

    def equals(self, other: "TextClassifierModel") -> bool:
        return (
            self.params == other.params
            and self.labels == other.labels
            and self.lang_mode == other.lang_mode
            and self.format_version == other.format_version
            and np.array_equal(self.row_ids, other.row_ids)
            and self.rows.tobytes() == other.rows.tobytes()
            and self.output_weights.tobytes() == other.output_weights.tobytes()
            and self.output_bias.tobytes() == other.output_bias.tobytes()
        )


@dataclass(frozen=True)
class Prediction:
    label: str
    probability: float
    distribution: tuple[float, ...]


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def forward(model: TextClassifierModel, text: str) -> np.ndarray:
    h = model.document_vector(text)
    z = model.output_weights.astype(np.float64) @ h + model.output_bias.astype(np.float64)
    return softmax(z)


def predict(model: TextClassifierModel, text: str) -> Prediction:
    dist = forward(model, text)
    k = int(np.argmax(dist))  # first maximum wins, i.e. label order breaks ties
    return Prediction(model.labels[k], float(dist[k]), tuple(float(x) for x in dist))


def loss_and_grads(rows: np.ndarray, local_ids: Sequence[int], W: np.ndarray, b: np.ndarray, y: int):
    """Cross-entropy of one example and its gradients.

    ``rows`` is the embedding table (any subset), ``local_ids`` index into it
    with multiplicity. Returns ``(loss, d_rows, d_W, d_b)`` with ``d_rows``
    shaped like ``rows``.
    """
    local_ids = np.asarray(local_ids, dtype=np.int64)
    n = len(local_ids)
    h = rows[local_ids].mean(axis=0) if n else np.zeros(W.shape[1])
    p = softmax(W @ h + b)
    loss = -np.log(p[y])
    g = p.copy()
    g[y] -= 1.0
    d_rows = np.zeros_like(rows)
    if n:
        np.add.at(d_rows, local_ids, (W.T @ g) / n)
    return loss, d_rows, np.outer(g, h), g


def _check_corpus(corpus: Sequence[tuple[str, str]]) -> None:
    if not corpus:
        raise EmptyCorpus("training corpus is empty")
    seen = Counter(label for _, label in corpus)
    unknown = set(seen) - set(LABELS)
    if unknown:
        raise ValueError(f"unknown labels {sorted(unknown)}")
    missing = [l for l in LABELS if not seen[l]]
    if missing:
        raise MissingLabel(f"corpus lacks labels {missing}")


def train(
    corpus: Sequence[tuple[str, str]],
    params: TrainParams = TrainParams(),
    lang_mode: str = "auto",
) -> TextClassifierModel:
    """Fit a model on ``(text, label)`` pairs. Deterministic given corpus order and params."""
    _check_corpus(corpus)
    label_index = {l: i for i, l in enumerate(LABELS)}
    token_docs = [tokenize(text, lang_mode) for text, _ in corpus]
    if params.min_count > 1:
        counts = Counter(t for doc in token_docs for t in doc)
        token_docs = [[t for t in doc if counts[t] >= params.min_count] for doc in token_docs]
    feature_docs = [featurize(doc, params) for doc in token_docs]
    row_ids = np.array(sorted({i for doc in feature_docs for i in doc}), dtype=np.uint32)
    local = {int(r): k for k, r in enumerate(row_ids)}
    docs = [np.array([local[i] for i in doc], dtype=np.int64) for doc in feature_docs]
    targets = [label_index[label] for _, label in corpus]

    rng = np.random.default_rng(params.seed)
    E = initial_rows(row_ids, params).astype(np.float64)
    W = np.zeros((len(LABELS), params.dim))
    b = np.zeros(len(LABELS))

    total = params.epochs * len(docs)
    step = 0
    for _ in range(params.epochs):
        for j in rng.permutation(len(docs)):
            lr = params.lr * (1.0 - step / total)
            ids = docs[j]
            y = targets[j]
            n = len(ids)
            h = E[ids].mean(axis=0) if n else np.zeros(params.dim)
            z = W @ h + b
            p = np.exp(z - z.max())
            p /= p.sum()
            p[y] -= 1.0
            if n:
                grad_h = W.T @ p
                np.add.at(E, ids, (-lr / n) * grad_h)
            W -= lr * np.outer(p, h)
            b -= lr * p
            step += 1

    return TextClassifierModel(
        params=params,
        row_ids=row_ids,
        rows=E.astype(np.float32),
        output_weights=W.astype(np.float32),
        output_bias=b.astype(np.float32),
        lang_mode=lang_mode,
    )


@dataclass
class Evaluation:
    accuracy: float
    confusion: np.ndarray  # counts, rows = true label, cols = predicted
    confusion_normalized: np.ndarray
    labels: tuple[str, ...] = LABELS

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "labels": list(self.labels),
            "confusion": self.confusion.tolist(),
            "confusion_normalized": self.confusion_normalized.tolist(),
        }


def evaluate(model: TextClassifierModel, labeled: Iterable[tuple[str, str]]) -> Evaluation:
    labeled = list(labeled)
    if not labeled:
        raise EmptySet("evaluation set is empty")
    idx = {l: i for i, l in enumerate(model.labels)}
    cm = np.zeros((len(idx), len(idx)), dtype=np.int64)
    for text, label in labeled:
        cm[idx[label], idx[predict(model, text).label]] += 1
    sums = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, sums, out=np.zeros(cm.shape), where=sums > 0)
    return Evaluation(float(np.trace(cm)) / len(labeled), cm, norm, tuple(model.labels))


# ------------------------------------------------------------------ persistence
#
# CCFT | u32 version | params | u8 lang | u32 nrows | u32[nrows] row ids |
# f32[nrows*dim] rows | f32[3*dim] output weights | f32[3] bias | u32 crc32
_PARAMS = struct.Struct("<IdIIIqI")
_LANG_CODES = {"auto": 0, "english": 1, "chinese": 2}


def _serialize(model: TextClassifierModel) -> bytes:
    p = model.params
    parts = [
        MAGIC,
        struct.pack("<I", model.format_version),
        _PARAMS.pack(p.dim, p.lr, p.epochs, p.ngram_order, p.buckets, p.seed, p.min_count),
        struct.pack("<BI", _LANG_CODES[model.lang_mode], len(model.row_ids)),
        np.asarray(model.row_ids, dtype="<u4").tobytes(),
        np.asarray(model.rows, dtype="<f4").tobytes(),
        np.asarray(model.output_weights, dtype="<f4").tobytes(),
        np.asarray(model.output_bias, dtype="<f4").tobytes(),
    ]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model: TextClassifierModel, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_bytes(_serialize(model))
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    return path


def load_model(path: str | Path) -> TextClassifierModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise VersionMismatch(f"{path}: not a CCFT model file")
    if len(blob) < 8:
        raise CorruptModel(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if len(blob) < 12 or zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise CorruptModel(f"{path}: checksum mismatch")
    try:
        off = 8
        dim, lr, epochs, order, buckets, seed, min_count = _PARAMS.unpack_from(blob, off)
        off += _PARAMS.size
        lang_code, nrows = struct.unpack_from("<BI", blob, off)
        off += 5
        params = TrainParams(dim, lr, epochs, order, buckets, seed, min_count)

        def take(dtype, count):
            nonlocal off
            arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
            off += arr.nbytes
            return arr.copy()

        row_ids = take("<u4", nrows).astype(np.uint32)
        rows = take("<f4", nrows * dim).astype(np.float32).reshape(nrows, dim)
        W = take("<f4", len(LABELS) * dim).astype(np.float32).reshape(len(LABELS), dim)
        b = take("<f4", len(LABELS)).astype(np.float32)
        if off != len(blob) - 4:
            raise CorruptModel(f"{path}: {len(blob) - 4 - off} trailing bytes")
        lang = {v: k for k, v in _LANG_CODES.items()}[lang_code]
    except (struct.error, ValueError, KeyError) as exc:
        raise CorruptModel(f"{path}: {exc}") from None
    return TextClassifierModel(params, row_ids, rows, W, b, LABELS, lang, version)


def read_corpus(path: str | Path) -> list[tuple[str, str]]:
    """``label<TAB>text`` per line; blank lines skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n\r")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if not sep or label not in LABELS:
                raise ValueError(f"{path}:{lineno}: expected '<label>\\t<text>' with label in {LABELS}")
            out.append((text, label))
    return out


class FastTextClassifier(ClassifierMixin, BaseEstimator):
    """Estimator front end: ``fit(texts, labels)``, ``predict``, ``predict_proba``."""

    def __init__(self, dim=100, lr=0.1, epochs=5, ngram_order=2, buckets=2 ** 21,
                 seed=42, min_count=1, lang_mode="auto"):
        self.dim = dim
        self.lr = lr
        self.epochs = epochs
        self.ngram_order = ngram_order
        self.buckets = buckets
        self.seed = seed
        self.min_count = min_count
        self.lang_mode = lang_mode

    def _params(self) -> TrainParams:
        return TrainParams(self.dim, self.lr, self.epochs, self.ngram_order, self.buckets,
                           self.seed, self.min_count)

    def fit(self, X, y):
        X = _as_texts(X)
        y = [str(v) for v in y]
        if len(X) != len(y):
            raise ValueError(f"X has {len(X)} texts but y has {len(y)} labels")
        self.model_ = train(list(zip(X, y)), self._params(), self.lang_mode)
        self.classes_ = np.array(LABELS)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return np.array([forward(self.model_, t) for t in _as_texts(X)])

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    @classmethod
    def from_model(cls, model: TextClassifierModel) -> "FastTextClassifier":
        est = cls(**asdict(model.params), lang_mode=model.lang_mode)
        est.model_ = model
        est.classes_ = np.array(model.labels)
        return est


def _as_texts(X) -> list[str]:
    if isinstance(X, str):
        raise ValueError("expected a sequence of texts, got a single string")
    texts = list(X)
    for t in texts:
        if not isinstance(t, str):
            raise TypeError(f"expected str, got {type(t).__name__}")
    return texts
