"""Brute-force evaluators written straight from the metric definitions."""

from fractions import Fraction


def mae_macro_oracle(truth, pred, K):
    """(1/|C|) * sum over present classes j of (1/|Te_j|) * sum_{x in Te_j} |h(x) - y|."""
    per_class = []
    for j in range(K):
        members = [i for i, y in enumerate(truth) if y == j]
        if not members:
            continue
        per_class.append(Fraction(sum(abs(pred[i] - truth[i]) for i in members), len(members)))
    return float(sum(per_class) / len(per_class))


def micro_f1_oracle(truth, pred, K):
    """F1 from true positives, false positives and false negatives pooled over classes."""
    tp = fp = fn = 0
    for c in range(K):
        for t, p in zip(truth, pred):
            if p == c and t == c:
                tp += 1
            elif p == c:
                fp += 1
            elif t == c:
                fn += 1
    if tp == 0:
        return 0.0
    precision = Fraction(tp, tp + fp)
    recall = Fraction(tp, tp + fn)
    return float(2 * precision * recall / (precision + recall))
