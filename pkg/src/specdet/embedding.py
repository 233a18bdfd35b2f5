"""Token embeddings for gadget classification.

Builds a vocabulary over corpus tokens, trains skip-gram vectors with
negative sampling, and encodes token sequences into fixed-shape
``maxlen x dim`` matrices (zero-padded, prefix-truncated).
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusManifest
from .errors import ModelFormatError

log = logging.getLogger("specdet.embedding")

PAD_INDEX = 0
OOV_INDEX = 1
EMBEDDING_FORMAT_VERSION = 1
_MAGIC = "specdet-embedding"


@dataclass(frozen=True)
class Vocabulary:
    """Token-to-index map; 0 is padding, 1 is out-of-vocabulary."""

    token_to_index: dict[str, int]
    min_count: int = 1

    def __post_init__(self):
        if PAD_INDEX in self.token_to_index.values() or OOV_INDEX in self.token_to_index.values():
            raise ValueError("indices 0 and 1 are reserved for PAD and OOV")

    @property
    def size(self) -> int:
        """Total row count including the PAD and OOV slots."""
        return len(self.token_to_index) + 2

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, OOV_INDEX)

    def indices(self, tokens) -> list[int]:
        get = self.token_to_index.get
        return [get(t, OOV_INDEX) for t in tokens]


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 32
    maxlen: int = 256
    window: int = 5
    negatives: int = 5
    epochs: int = 15
    learning_rate: float = 0.025
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.maxlen < 1 or self.window < 1 or self.negatives < 1:
            raise ValueError("dim, maxlen, window, and negatives must all be >= 1")
        if self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0 and learning_rate > 0")


@dataclass
class EmbeddingMatrix:
    """Trained vectors, one row per vocabulary index. Row 0 stays zero."""

    vectors: np.ndarray
    config: EmbeddingConfig
    vocab: Vocabulary
    epoch_losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.vectors.shape != (self.vocab.size, self.config.dim):
            raise ValueError(
                f"vectors shape {self.vectors.shape} does not match "
                f"(vocab {self.vocab.size}, dim {self.config.dim})"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding contains non-finite values")


@dataclass(frozen=True)
class EncodedSequence:
    """A ``maxlen x dim`` matrix; rows past ``true_length`` are zero."""

    matrix: np.ndarray
    true_length: int


def build_vocab(corpus: CorpusManifest, min_count: int = 1) -> Vocabulary:
    """Assign indices by descending frequency, ties broken lexicographically."""
    if len(corpus.records) == 0:
        raise ValueError("empty corpus")
    counts = Counter()
    for rec in corpus.records:
        counts.update(rec.tokens)
    kept = [(tok, n) for tok, n in counts.items() if n >= min_count]
    kept.sort(key=lambda item: (-item[1], item[0]))
    mapping = {tok: i + 2 for i, (tok, _) in enumerate(kept)}
    return Vocabulary(mapping, min_count=min_count)


def _pair_loss_and_grads(center_vec, pos_vec, neg_vecs):
    """Negative-sampling loss for one (center, context, negatives) triple.

    Returns (loss, grad_center, grad_pos, grad_negs). Kept separate from
    the training loop so the gradients can be checked against finite
    differences.
    """
    ctx = np.vstack([pos_vec, neg_vecs])  # (1+k, dim)
    dots = ctx @ center_vec
    sig = 1.0 / (1.0 + np.exp(-dots))
    # -log sigma(d_pos) - sum log sigma(-d_neg), via stable softplus
    loss = np.logaddexp(0.0, -dots[0]) + np.sum(np.logaddexp(0.0, dots[1:]))
    coeff = sig.copy()
    coeff[0] -= 1.0  # sigma(d)-1 for the positive, sigma(d) for negatives
    grad_center = coeff @ ctx
    grad_ctx = np.outer(coeff, center_vec)
    return loss, grad_center, grad_ctx[0], grad_ctx[1:]


def train_skipgram(
    corpus: CorpusManifest, vocab: Vocabulary, config: EmbeddingConfig
) -> EmbeddingMatrix:
    """Train skip-gram vectors with negative sampling.

    Every (position, offset) pair inside the window becomes one positive
    example contrasted against ``config.negatives`` noise tokens drawn
    from the unigram distribution raised to the 3/4 power. Training is
    single-threaded and bit-deterministic for a given seed; the PAD row
    is never touched.
    """
    if len(vocab.token_to_index) == 0:
        raise ValueError("vocabulary has no real tokens")
    V, dim = vocab.size, config.dim
    rng = np.random.default_rng(config.seed)

    W = (rng.random((V, dim)) - 0.5) / dim
    W[PAD_INDEX] = 0.0
    C = np.zeros((V, dim))

    docs = [vocab.indices(rec.tokens) for rec in corpus.records]
    docs = [d for d in docs if len(d) >= 2]

    counts = np.zeros(V)
    for d in docs:
        for i in d:
            counts[i] += 1
    noise = counts**0.75
    noise[PAD_INDEX] = 0.0
    total = noise.sum()
    if total == 0 or not docs:
        # Nothing trainable: singleton documents only.
        return EmbeddingMatrix(W, config, vocab, [])
    noise_cdf = np.cumsum(noise / total)

    pairs_per_epoch = sum(
        min(config.window, t) + min(config.window, len(d) - 1 - t)
        for d in docs
        for t in range(len(d))
    )
    total_steps = max(1, pairs_per_epoch * config.epochs)
    lr0 = config.learning_rate
    k = config.negatives

    epoch_losses = []
    step = 0
    for _ in range(config.epochs):
        loss_sum = 0.0
        n_pairs = 0
        for d in docs:
            L = len(d)
            for t in range(L):
                center = d[t]
                lo = max(0, t - config.window)
                hi = min(L, t + config.window + 1)
                for j in range(lo, hi):
                    if j == t:
                        continue
                    pos = d[j]
                    negs = np.searchsorted(noise_cdf, rng.random(k), side="right")
                    alpha = max(lr0 * (1.0 - step / total_steps), lr0 * 1e-4)
                    step += 1

                    w = W[center].copy()
                    rows = np.concatenate(([pos], negs))
                    ctx = C[rows]
                    dots = ctx @ w
                    sig = 1.0 / (1.0 + np.exp(-dots))
                    loss_sum += np.logaddexp(0.0, -dots[0]) + np.sum(
                        np.logaddexp(0.0, dots[1:])
                    )
                    n_pairs += 1
                    coeff = sig
                    coeff[0] -= 1.0
                    W[center] = w - alpha * (coeff @ ctx)
                    # np.add.at accumulates when a negative repeats
                    np.subtract.at(C, rows, alpha * np.outer(coeff, w))
        epoch_losses.append(loss_sum / max(1, n_pairs))

    return EmbeddingMatrix(W, config, vocab, epoch_losses)


def encode_sequence(tokens, embedding: EmbeddingMatrix) -> EncodedSequence:
    """Map tokens to their vectors; pad with zero rows, keep the first
    ``maxlen`` tokens when longer."""
    maxlen, dim = embedding.config.maxlen, embedding.config.dim
    idx = embedding.vocab.indices(tokens)[:maxlen]
    matrix = np.zeros((maxlen, dim))
    if idx:
        matrix[: len(idx)] = embedding.vectors[idx]
    return EncodedSequence(matrix=matrix, true_length=len(idx))


def pool_features(seq: EncodedSequence) -> np.ndarray:
    """Mean over the occupied rows; zero vector for an empty sequence."""
    if seq.true_length == 0:
        return np.zeros(seq.matrix.shape[1])
    return seq.matrix[: seq.true_length].mean(axis=0)


def save_embedding(embedding: EmbeddingMatrix, path) -> None:
    """Versioned text format: header, vocabulary, then row-major vectors."""
    cfg = embedding.config
    vocab = embedding.vocab
    inverse = sorted(vocab.token_to_index.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{_MAGIC} {EMBEDDING_FORMAT_VERSION}\n")
        fh.write(f"dim {cfg.dim}\n")
        fh.write(f"maxlen {cfg.maxlen}\n")
        fh.write(f"vocab {vocab.size}\n")
        fh.write(f"min_count {vocab.min_count}\n")
        fh.write(f"window {cfg.window}\n")
        fh.write(f"negatives {cfg.negatives}\n")
        fh.write(f"epochs {cfg.epochs}\n")
        fh.write(f"learning_rate {cfg.learning_rate!r}\n")
        fh.write(f"seed {cfg.seed}\n")
        for tok, _ in inverse:
            fh.write(tok + "\n")
        for row in embedding.vectors:
            fh.write(" ".join(repr(v) for v in row.tolist()) + "\n")


def load_embedding(path) -> EmbeddingMatrix:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ModelFormatError(f"empty embedding file: {path}")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != _MAGIC:
        raise ModelFormatError(f"not an embedding file: {path}")
    if magic[1] != str(EMBEDDING_FORMAT_VERSION):
        raise ModelFormatError(
            f"unsupported embedding format version {magic[1]} "
            f"(expected {EMBEDDING_FORMAT_VERSION})"
        )
    header = {}
    for i, line in enumerate(lines[1:10], start=1):
        key, _, value = line.partition(" ")
        header[key] = value
    try:
        dim = int(header["dim"])
        maxlen = int(header["maxlen"])
        size = int(header["vocab"])
        min_count = int(header["min_count"])
        cfg = EmbeddingConfig(
            dim=dim,
            maxlen=maxlen,
            window=int(header["window"]),
            negatives=int(header["negatives"]),
            epochs=int(header["epochs"]),
            learning_rate=float(header["learning_rate"]),
            seed=int(header["seed"]),
        )
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"bad embedding header in {path}: {exc}") from exc
    body = lines[10:]
    n_tokens = size - 2
    if len(body) != n_tokens + size:
        raise ModelFormatError(
            f"embedding file {path} truncated: expected {n_tokens + size} "
            f"body lines, found {len(body)}"
        )
    mapping = {tok: i + 2 for i, tok in enumerate(body[:n_tokens])}
    try:
        vectors = np.array(
            [[float(v) for v in line.split()] for line in body[n_tokens:]]
        )
    except ValueError as exc:
        raise ModelFormatError(f"bad vector row in {path}: {exc}") from exc
    if vectors.shape != (size, dim):
        raise ModelFormatError(
            f"embedding file {path} has vector block {vectors.shape}, "
            f"expected {(size, dim)}"
        )
    return EmbeddingMatrix(vectors, cfg, Vocabulary(mapping, min_count=min_count))
