"""Labeled tweet datasets: tokenization, SemEval-style TSV parsing, class statistics."""

from __future__ import annotations

import enum
import re
import string
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .errors import MalformedLine, UnknownLabel, ZeroClassCount


class LabelScale(enum.Enum):
    TERNARY = ("Ternary", ("Negative", "Neutral", "Positive"))
    FINE_GRAINED = (
        "FineGrained",
        ("VeryNegative", "Negative", "Neutral", "Positive", "VeryPositive"),
    )

    def __init__(self, label: str, classes: tuple[str, ...]):
        self.label = label
        self.classes = classes

    @property
    def cardinality(self) -> int:
        return len(self.classes)

    def index(self, name: str) -> int:
        return self.classes.index(name)

    @classmethod
    def from_name(cls, name: str) -> "LabelScale":
        key = name.strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "ternary": cls.TERNARY,
            "3": cls.TERNARY,
            "finegrained": cls.FINE_GRAINED,
            "fine": cls.FINE_GRAINED,
            "5": cls.FINE_GRAINED,
        }
        if key not in aliases:
            raise ValueError(f"unknown label scale {name!r}")
        return aliases[key]


class Split(enum.Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


# SemEval-2016 subtask C distributes fine-grained labels as integers -2..2
_FINE_CODES = {"-2": 0, "-1": 1, "0": 2, "1": 3, "2": 4}


def _label_table(scale: LabelScale) -> dict[str, int]:
    table = {name.lower(): i for i, name in enumerate(scale.classes)}
    if scale is LabelScale.FINE_GRAINED:
        table.update(_FINE_CODES)
    return table


_LABEL_TABLES = {scale: _label_table(scale) for scale in LabelScale}


def parse_label(token: str, scale: LabelScale) -> int | None:
    return _LABEL_TABLES[scale].get(token.strip().lower())


EMOTICON_PATTERN = r"""
    (?:
      [<>]?
      [:;=8]
      [\-o\*\']?
      [\)\]\(\[dDpP/\:\}\{@\|\\]
      |
      [\)\]\(\[dDpP/\:\}\{@\|\\]
      [\-o\*\']?
      [:;=8]
      [<>]?
      |
      <3
    )"""

EMOTICON_RE = re.compile(EMOTICON_PATTERN, re.VERBOSE)
_EMOTICON_FULL = re.compile(r"^" + EMOTICON_PATTERN + r"$", re.VERBOSE)
_URL_RE = re.compile(r"^(?:https?://|www\.)\S+$", re.IGNORECASE)
_URL_TRAILING = ".,!?;:)]}'\""


def _is_punct(ch: str) -> bool:
    return ch in string.punctuation or unicodedata.category(ch).startswith("P")


def is_emoticon(token: str) -> bool:
    return _EMOTICON_FULL.match(token) is not None


def _split_chunk(chunk: str) -> str | None:
    if is_emoticon(chunk):
        return chunk
    if _URL_RE.match(chunk):
        url = chunk.rstrip(_URL_TRAILING)
        return url if _URL_RE.match(url) else None

    start = 0
    while start < len(chunk) and _is_punct(chunk[start]):
        start += 1
    end = len(chunk)
    while end > start and _is_punct(chunk[end - 1]):
        end -= 1
    core = chunk[start:end]
    if not core:
        return None
    # keep the sigil of @mentions and #hashtags that leading-strip removed
    if start > 0 and chunk[start - 1] in "@#":
        core = chunk[start - 1] + core
    return core.lower()


def tokenize(raw_text: str) -> list[str]:
    """Split a tweet into lowercase tokens.

    Mentions, hashtags, URLs and western emoticons survive as single
    tokens; other chunks lose surrounding punctuation. Character
    elongations ("sooo") are left untouched.
    """
    tokens = []
    for chunk in raw_text.split():
        token = _split_chunk(chunk)
        if token:
            tokens.append(token)
    return tokens


@dataclass(frozen=True)
class Tweet:
    id: str
    raw_text: str
    tokens: tuple[str, ...]

    @classmethod
    def from_text(cls, id: str, raw_text: str) -> "Tweet":
        return cls(id, raw_text, tuple(tokenize(raw_text)))


@dataclass(frozen=True)
class LabeledExample:
    tweet: Tweet
    label: int
    scale: LabelScale

    def __post_init__(self):
        if not 0 <= self.label < self.scale.cardinality:
            raise ValueError(f"label {self.label} out of range for {self.scale.label}")


@dataclass(frozen=True)
class Dataset:
    scale: LabelScale
    split: Split
    examples: tuple[LabeledExample, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for ex in self.examples:
            if ex.scale is not self.scale:
                raise ValueError("example scale differs from dataset scale")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    @property
    def token_lists(self) -> list[tuple[str, ...]]:
        return [ex.tweet.tokens for ex in self.examples]


def parse_dataset(stream: Iterable[str], scale: LabelScale, split: Split = Split.TRAIN) -> Dataset:
    """Read ``id<TAB>label<TAB>text`` lines; ``#`` lines and blank lines are skipped."""
    examples = []
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t", 2)
        if len(fields) < 3:
            raise MalformedLine(lineno)
        tweet_id, label_token, text = fields
        label = parse_label(label_token, scale)
        if label is None:
            raise UnknownLabel(lineno, label_token)
        examples.append(LabeledExample(Tweet.from_text(tweet_id, text), label, scale))
    return Dataset(scale, split, tuple(examples))


def read_dataset(path, scale: LabelScale, split: Split = Split.TRAIN) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh, scale, split)


def write_dataset(ds: Dataset, stream: TextIO) -> None:
    for ex in ds.examples:
        stream.write(f"{ex.tweet.id}\t{ds.scale.classes[ex.label]}\t{ex.tweet.raw_text}\n")


def class_distribution(ds: Dataset) -> np.ndarray:
    counts = np.zeros(ds.scale.cardinality, dtype=np.int64)
    for ex in ds.examples:
        counts[ex.label] += 1
    return counts


class WeightScheme(enum.Enum):
    UNIFORM = "uniform"
    INVERSE_FREQUENCY = "inverse_frequency"


@dataclass(frozen=True)
class ClassWeights:
    weights: np.ndarray
    scheme: WeightScheme

    def __getitem__(self, c):
        return self.weights[c]


def class_weights(counts, scheme: WeightScheme = WeightScheme.INVERSE_FREQUENCY) -> ClassWeights:
    """Per-class loss multipliers.

    Inverse-frequency weights are ``N / (K * n_c)`` so that a balanced
    dataset gets unit weights and ``sum(n_c * w_c) == N``.
    """
    counts = np.asarray(counts, dtype=np.float64)
    k = len(counts)
    if scheme is WeightScheme.UNIFORM:
        return ClassWeights(np.ones(k), scheme)
    for c, n in enumerate(counts):
        if n <= 0:
            raise ZeroClassCount(c)
    return ClassWeights(counts.sum() / (k * counts), scheme)


def coarsen_label(fine: int) -> int:
    if not 0 <= fine <= 4:
        raise ValueError(f"fine-grained label {fine} outside 0..4")
    return (0, 0, 1, 2, 2)[fine]
