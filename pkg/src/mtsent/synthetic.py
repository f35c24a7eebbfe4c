"""Synthetic tweets whose fine-grained and ternary labels share one latent score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, LabeledExample, LabelScale, Split, Tweet, coarsen_label


@dataclass
class SyntheticCorpus:
    fine_train: Dataset
    fine_dev: Dataset
    ternary_train: Dataset
    vocab: list[str]
    polarity: dict  # word -> latent level 0..4, or None for filler words


def _make_vocab(size: int):
    # half the words carry one of five sentiment levels, the rest are filler
    n_sent = max(5, size // 2)
    per_level = n_sent // 5
    words, polarity = [], {}
    for level in range(5):
        for j in range(per_level):
            w = f"s{level}w{j}"
            words.append(w)
            polarity[w] = level
    for j in range(size - len(words)):
        w = f"f{j}"
        words.append(w)
        polarity[w] = None
    return words, polarity


def _tweet(rng, level, by_level, filler, p_sent, p_near, min_len, max_len):
    n = int(rng.integers(min_len, max_len + 1))
    toks = []
    for _ in range(n):
        u = rng.random()
        if u < p_sent:
            toks.append(by_level[level][rng.integers(len(by_level[level]))])
        elif u < p_sent + p_near:
            near = int(np.clip(level + rng.choice((-1, 1)), 0, 4))
            toks.append(by_level[near][rng.integers(len(by_level[near]))])
        else:
            toks.append(filler[rng.integers(len(filler))])
    return " ".join(toks)


def make_corpus(n_fine: int = 5000, n_ternary: int = 5000, n_dev: int = 1000, vocab_size: int = 200,
                ternary_noise: float = 0.3, seed: int = 0, p_sent: float = 0.25, p_near: float = 0.15,
                min_len: int = 4, max_len: int = 10, level_probs=(0.1, 0.2, 0.3, 0.25, 0.15)) -> SyntheticCorpus:
    """Generate fine-grained train/dev sets and a ternary train set.

    Every tweet draws a latent level 0..4; the fine label is that level and
    the ternary label is its coarsened value, replaced by a uniformly drawn
    different class with probability ``ternary_noise``.
    """
    rng = np.random.default_rng(seed)
    words, polarity = _make_vocab(vocab_size)
    by_level = [[w for w in words if polarity[w] == lvl] for lvl in range(5)]
    filler = [w for w in words if polarity[w] is None]
    level_probs = np.asarray(level_probs, dtype=np.float64)
    level_probs = level_probs / level_probs.sum()

    def draw(n, scale, split, prefix, noise):
        examples = []
        for i in range(n):
            level = int(rng.choice(5, p=level_probs))
            text = _tweet(rng, level, by_level, filler, p_sent, p_near, min_len, max_len)
            if scale is LabelScale.FINE_GRAINED:
                label = level
            else:
                label = coarsen_label(level)
                if rng.random() < noise:
                    label = int((label + rng.integers(1, 3)) % 3)
            examples.append(LabeledExample(Tweet.from_text(f"{prefix}{i}", text), label, scale))
        return Dataset(scale, split, tuple(examples))

    fine_train = draw(n_fine, LabelScale.FINE_GRAINED, Split.TRAIN, "ft", 0.0)
    fine_dev = draw(n_dev, LabelScale.FINE_GRAINED, Split.DEV, "fd", 0.0)
    ternary_train = draw(n_ternary, LabelScale.TERNARY, Split.TRAIN, "tt", ternary_noise)
    return SyntheticCorpus(fine_train, fine_dev, ternary_train, words, polarity)
