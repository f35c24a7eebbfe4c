"""Word vectors: text-format loading, nbow averaging and trainable tables."""

from __future__ import annotations

import enum
import logging
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch

log = logging.getLogger(__name__)

UNK = "<unk>"


class OOVPolicy(enum.Enum):
    SKIP = "skip"
    ZERO_VECTOR = "zero"
    RANDOM_INIT = "random"


@dataclass
class EmbeddingTable:
    dim: int
    vocab: dict[str, int]
    matrix: np.ndarray
    trainable: bool = False
    oov_policy: OOVPolicy = OOVPolicy.SKIP
    oov_limit: float = 0.05
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("embedding dimension must be positive")
        if self.matrix.shape != (len(self.vocab), self.dim):
            raise DimensionMismatch(message=f"matrix shape {self.matrix.shape} does not match vocab/dim")

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def lookup(self, word: str) -> np.ndarray | None:
        i = self.vocab.get(word)
        return None if i is None else self.matrix[i]

    @property
    def words(self) -> list[str]:
        out = [""] * len(self.vocab)
        for w, i in self.vocab.items():
            out[i] = w
        return out


def load_vectors_text(stream: Iterable[str], expected_dim: int | None = None) -> EmbeddingTable:
    """Parse ``word v1 ... vd`` lines (GloVe text format)."""
    vocab: dict[str, int] = {}
    rows: list[list[float]] = []
    warnings = []
    dim = expected_dim
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.rstrip(" ").split(" ")
        word, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise DimensionMismatch(lineno, f"expected {dim} values, found {len(values)}")
        if word in vocab:
            msg = f"duplicate word {word!r} on line {lineno}; keeping first occurrence"
            warnings.append(msg)
            log.warning(msg)
            continue
        vocab[word] = len(rows)
        rows.append([float(v) for v in values])
    if dim is None or dim <= 0:
        raise DimensionMismatch(message="no vectors found")
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingTable(dim, vocab, matrix, trainable=False, warnings=warnings)


def load_vectors(path, expected_dim: int | None = None) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        return load_vectors_text(fh, expected_dim)


def _oov_vector(word: str, dim: int, limit: float) -> np.ndarray:
    # stable per-word draw so frozen features stay a pure function of the text
    rng = np.random.default_rng(zlib.crc32(word.encode("utf-8")))
    return rng.uniform(-limit, limit, size=dim)


def nbow_compose(tokens: Sequence[str], table: EmbeddingTable, warnings: list | None = None) -> np.ndarray:
    """Average the vectors of ``tokens``; all-OOV or empty input gives zeros."""
    total = np.zeros(table.dim)
    n = 0
    for tok in tokens:
        vec = table.lookup(tok)
        if vec is None:
            if table.oov_policy is OOVPolicy.SKIP:
                continue
            if table.oov_policy is OOVPolicy.RANDOM_INIT:
                vec = _oov_vector(tok, table.dim, table.oov_limit)
            else:
                n += 1
                continue
        total += vec
        n += 1
    if n == 0:
        msg = f"no in-vocabulary tokens in {list(tokens)!r}; using zero vector"
        if warnings is not None:
            warnings.append(msg)
        log.debug(msg)
        return total
    return total / n


def nbow_matrix(token_lists: Sequence[Sequence[str]], table: EmbeddingTable) -> np.ndarray:
    out = np.zeros((len(token_lists), table.dim))
    for i, toks in enumerate(token_lists):
        out[i] = nbow_compose(toks, table)
    return out


def build_trainable_table(corpus_vocab: Sequence[str], pretrained: EmbeddingTable | None,
                          rng: np.random.Generator, dim: int | None = None) -> EmbeddingTable:
    """Trainable table over ``corpus_vocab``.

    Rows of words known to ``pretrained`` are copied; the rest are drawn
    from the Glorot uniform range over (|V|, d).
    """
    from .optim import glorot_limit

    if pretrained is not None:
        dim = pretrained.dim
    if dim is None:
        raise ValueError("either a pretrained table or dim is required")
    words = list(dict.fromkeys(corpus_vocab))
    vocab = {w: i for i, w in enumerate(words)}
    limit = glorot_limit(len(words), dim)
    matrix = rng.uniform(-limit, limit, size=(len(words), dim))
    if pretrained is not None:
        for w, i in vocab.items():
            j = pretrained.vocab.get(w)
            if j is not None:
                matrix[i] = pretrained.matrix[j]
    return EmbeddingTable(dim, vocab, matrix, trainable=True,
                          oov_policy=OOVPolicy.RANDOM_INIT, oov_limit=limit)
