"""Hand-crafted tweet features: punctuation/emoticon/elongation counts and lexicon aggregates."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import is_emoticon
from .errors import LexiconLoadError


class LexiconKind(enum.Enum):
    MEMBERSHIP = "membership"
    SCORED = "scored"


@dataclass(frozen=True)
class Lexicon:
    name: str
    kind: LexiconKind
    entries: dict

    def __post_init__(self):
        if not self.name:
            raise ValueError("lexicon name must be nonempty")
        if self.kind is LexiconKind.SCORED:
            for w, s in self.entries.items():
                if not math.isfinite(s):
                    raise ValueError(f"non-finite score for {w!r} in lexicon {self.name!r}")

    @property
    def categories(self) -> tuple[str, ...]:
        if self.kind is not LexiconKind.MEMBERSHIP:
            return ()
        cats = set()
        for c in self.entries.values():
            cats.update(c)
        return tuple(sorted(cats))

    @property
    def feature_names(self) -> tuple[str, ...]:
        if self.kind is LexiconKind.SCORED:
            return SCORED_AGGREGATES
        return self.categories

    @property
    def score_range(self) -> tuple[float, float]:
        if self.kind is not LexiconKind.SCORED or not self.entries:
            return (0.0, 0.0)
        vals = self.entries.values()
        return (min(vals), max(vals))


SCORED_AGGREGATES = ("count", "sum", "max", "last")


def load_lexicon(name: str, kind: LexiconKind | str, path) -> Lexicon:
    """Read a ``word<TAB>score`` or ``word<TAB>category`` file."""
    kind = LexiconKind(kind)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise LexiconLoadError(name, str(exc)) from exc
    entries: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise LexiconLoadError(name, f"line {lineno}: expected word<TAB>value")
        word, value = parts[0].strip().lower(), parts[1].strip()
        if kind is LexiconKind.SCORED:
            try:
                score = float(value)
            except ValueError:
                raise LexiconLoadError(name, f"line {lineno}: bad score {value!r}") from None
            if not math.isfinite(score):
                raise LexiconLoadError(name, f"line {lineno}: non-finite score")
            entries.setdefault(word, score)
        else:
            entries.setdefault(word, set()).add(value)
    if kind is LexiconKind.MEMBERSHIP:
        entries = {w: frozenset(c) for w, c in entries.items()}
    return Lexicon(name, kind, entries)


_RUN_RE = re.compile(r"[!?]{2,}")
_ELONGATED_RE = re.compile(r"([^\W\d_])\1\1")
_POSITIVE_MOUTHS = set(")]pPdD}")
_NEGATIVE_MOUTHS = set("([/\\{|")

SURFACE_FEATURES = (
    "count_!",
    "count_?",
    "count_#",
    "count_@",
    "runs_!?",
    "elongated",
    "all_caps",
    "emoticons",
    "emoticons_pos",
    "emoticons_neg",
)


def _emoticon_polarity(emo: str) -> int:
    if emo == "<3":
        return 1
    core = emo.strip("<>")
    # eyes-first emoticons end with the mouth, mouth-first ones start with it
    mouth = core[-1] if core[0] in ":;=8" else core[0]
    if core[0] not in ":;=8":
        # reversed emoticons mirror the mouth: "(:" is a smile
        mouth = {"(": ")", ")": "(", "[": "]", "]": "["}.get(mouth, mouth)
    if mouth in _POSITIVE_MOUTHS:
        return 1
    if mouth in _NEGATIVE_MOUTHS:
        return -1
    return 0


def surface_counts(raw_text: str, tokens: Sequence[str]) -> dict[str, float]:
    emoticons = [t for t in tokens if is_emoticon(t)]
    # tokens are lowercased, so capitalisation is read off the raw text
    all_caps = 0
    for chunk in raw_text.split():
        word = chunk.strip("".join(c for c in chunk if not c.isalnum()))
        if len(word) >= 2 and word.isalpha() and word.isupper():
            all_caps += 1
    polarities = [_emoticon_polarity(e) for e in emoticons]
    return {
        "count_!": float(raw_text.count("!")),
        "count_?": float(raw_text.count("?")),
        "count_#": float(raw_text.count("#")),
        "count_@": float(raw_text.count("@")),
        "runs_!?": float(len(_RUN_RE.findall(raw_text))),
        "elongated": float(sum(1 for t in tokens if _ELONGATED_RE.search(t))),
        "all_caps": float(all_caps),
        "emoticons": float(len(emoticons)),
        "emoticons_pos": float(sum(1 for p in polarities if p > 0)),
        "emoticons_neg": float(sum(1 for p in polarities if p < 0)),
    }


def lexicon_features(tokens: Sequence[str], lexicon: Lexicon) -> dict[str, float]:
    if lexicon.kind is LexiconKind.MEMBERSHIP:
        out = {c: 0.0 for c in lexicon.categories}
        for t in tokens:
            for c in lexicon.entries.get(t, ()):
                out[c] += 1.0
        return out
    hits = [lexicon.entries[t] for t in tokens if t in lexicon.entries]
    if not hits:
        return {"count": 0.0, "sum": 0.0, "max": 0.0, "last": 0.0}
    return {
        "count": float(len(hits)),
        "sum": float(sum(hits)),
        "max": float(max(hits)),
        "last": float(hits[-1]),
    }


@dataclass(frozen=True)
class LexiconSource:
    name: str
    kind: LexiconKind
    path: str


@dataclass
class FeaturePipelineConfig:
    """Ordered feature groups; ``surface`` first, then one group per lexicon."""

    lexicons: list[Lexicon] = field(default_factory=list)
    include_surface: bool = True

    @classmethod
    def from_sources(cls, sources: Sequence[LexiconSource], include_surface: bool = True):
        return cls([load_lexicon(s.name, s.kind, s.path) for s in sources], include_surface)

    @property
    def enabled_groups(self) -> list[str]:
        groups = ["surface"] if self.include_surface else []
        return groups + [lex.name for lex in self.lexicons]

    @property
    def manifest(self) -> list[str]:
        names = []
        if self.include_surface:
            names += [f"surface:{f}" for f in SURFACE_FEATURES]
        for lex in self.lexicons:
            names += [f"lex:{lex.name}:{f}" for f in lex.feature_names]
        return names

    @property
    def total_dim(self) -> int:
        return len(self.manifest)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    manifest: tuple[str, ...]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.manifest, self.values.tolist()))


def assemble(raw_text: str, tokens: Sequence[str], config: FeaturePipelineConfig) -> FeatureVector:
    values: list[float] = []
    if config.include_surface:
        counts = surface_counts(raw_text, tokens)
        values += [counts[f] for f in SURFACE_FEATURES]
    for lex in config.lexicons:
        feats = lexicon_features(tokens, lex)
        values += [feats[f] for f in lex.feature_names]
    return FeatureVector(np.array(values, dtype=np.float64), tuple(config.manifest))


def feature_matrix(texts: Sequence[str], token_lists: Sequence[Sequence[str]],
                   config: FeaturePipelineConfig) -> np.ndarray:
    out = np.zeros((len(texts), config.total_dim))
    for i, (text, toks) in enumerate(zip(texts, token_lists)):
        out[i] = assemble(text, toks, config).values
    return out

