"""Linear baselines (one-vs-rest and multinomial logistic regression, one-vs-rest
and Crammer-Singer SVMs) trained by averaged stochastic subgradient descent,
plus stratified k-fold grid search over the regularisation constant C."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import numpy as np

from .errors import DimensionMismatch, NonFiniteLoss, TooFewExamples
from .metrics import mae_macro, micro_f1


class Strategy(enum.Enum):
    OVR_LOGISTIC = "lr-ovr"
    MULTINOMIAL = "maxent"
    OVR_HINGE = "svm-ovr"
    CRAMMER_SINGER = "svm-cs"


C_GRID = tuple(10.0 ** e for e in range(-4, 5))


@dataclass
class LinearModel:
    W: np.ndarray
    b: np.ndarray
    strategy: Strategy
    C: float

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.W.shape[1]:
            raise DimensionMismatch(message=f"expected {self.W.shape[1]} features, got {X.shape[1]}")
        return X @ self.W.T + self.b

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def save(self, path) -> None:
        np.savez(path, W=self.W, b=self.b, strategy=self.strategy.value, C=self.C)

    @classmethod
    def load(cls, path) -> "LinearModel":
        with np.load(path) as z:
            return cls(z["W"], z["b"], Strategy(str(z["strategy"])), float(z["C"]))


def predict(model: LinearModel, x) -> int:
    return int(model.predict(np.atleast_2d(x))[0])


def crammer_singer_loss(scores, y) -> np.ndarray:
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    y = np.atleast_1d(y)
    n = len(y)
    true = scores[np.arange(n), y]
    rival = scores.copy()
    rival[np.arange(n), y] = -np.inf
    return np.maximum(0.0, 1.0 + rival.max(axis=1) - true)


def _signs(y, K):
    t = -np.ones((len(y), K))
    t[np.arange(len(y)), y] = 1.0
    return t


def data_loss(strategy: Strategy, S: np.ndarray, y: np.ndarray):
    """Per-example loss and its (sub)gradient with respect to the scores ``S``."""
    n, K = S.shape
    rows = np.arange(n)
    if strategy is Strategy.MULTINOMIAL:
        z = S - S.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        loss = logsum - z[rows, y]
        dS = np.exp(z - logsum[:, None])
        dS[rows, y] -= 1.0
        return loss, dS
    if strategy is Strategy.OVR_LOGISTIC:
        m = _signs(y, K) * S
        loss = np.logaddexp(0.0, -m).sum(axis=1)
        # d/dm log(1 + e^-m) = -sigmoid(-m)
        sig = np.exp(-np.logaddexp(0.0, m))
        return loss, -_signs(y, K) * sig
    if strategy is Strategy.OVR_HINGE:
        t = _signs(y, K)
        margin = 1.0 - t * S
        loss = np.maximum(0.0, margin).sum(axis=1)
        return loss, np.where(margin > 0, -t, 0.0)
    loss = crammer_singer_loss(S, y)
    rival = S.copy()
    rival[rows, y] = -np.inf
    j = rival.argmax(axis=1)
    active = loss > 0
    dS = np.zeros_like(S)
    dS[rows[active], j[active]] = 1.0
    dS[rows[active], y[active]] -= 1.0
    return loss, dS


def objective(strategy: Strategy, W, b, X, y, sample_weight, C: float) -> float:
    """``mean(w_i * loss_i) + ||W||^2 / (2C)``; the bias is not regularised."""
    loss, _ = data_loss(strategy, X @ W.T + b, y)
    return float(np.mean(sample_weight * loss) + 0.5 / C * np.sum(W * W))


def objective_grad(strategy: Strategy, W, b, X, y, sample_weight, C: float):
    _, dS = data_loss(strategy, X @ W.T + b, y)
    dS = dS * (sample_weight / len(y))[:, None]
    return dS.T @ X + W / C, dS.sum(axis=0)


@dataclass
class FitTrace:
    """Objective of the averaged iterate at the end of each epoch."""

    objectives: list[float] = field(default_factory=list)


def fit(strategy: Strategy | str, X, y, class_weights=None, C: float = 1.0, n_classes: int | None = None,
        seed: int = 0, epochs: int = 100, batch_size: int = 32, trace: FitTrace | None = None) -> LinearModel:
    """Minimise the regularised objective by seeded minibatch SGD with iterate averaging.

    Weights step by ``e / (1 + t*e/C)^0.75`` with ``e`` set from the largest
    squared row norm and capped at C. The unregularised bias decays as if
    C were at least 1, so a strong penalty does not freeze it. Averaging
    starts after the first epoch.
    """
    strategy = Strategy(strategy)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise DimensionMismatch(message="X must be a nonempty 2-D array")
    if len(y) != len(X):
        raise DimensionMismatch(message=f"{len(X)} rows but {len(y)} labels")
    K = n_classes if n_classes is not None else int(y.max()) + 1
    cw = np.ones(K) if class_weights is None else np.asarray(getattr(class_weights, "weights", class_weights), dtype=np.float64)
    sw = cw[y]
    n, d = X.shape
    lam = 1.0 / C
    base = 10.0 / (1.0 + float(np.max(np.sum(X * X, axis=1))))
    eta_w0 = min(base, C)
    lam_b = min(lam, 1.0)
    rng = np.random.default_rng(seed)
    W = np.zeros((K, d))
    b = np.zeros(K)
    W_avg, b_avg = W.copy(), b.copy()
    n_avg = 0
    t = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            t += 1
            eta = eta_w0 / (1.0 + lam * eta_w0 * t) ** 0.75
            eta_b = base / (1.0 + lam_b * base * t) ** 0.75
            _, dS = data_loss(strategy, X[idx] @ W.T + b, y[idx])
            dS *= (sw[idx] / len(idx))[:, None]
            W -= eta * (dS.T @ X[idx] + lam * W)
            b -= eta_b * dS.sum(axis=0)
            if epoch > 0:
                n_avg += 1
                W_avg += (W - W_avg) / n_avg
                b_avg += (b - b_avg) / n_avg
        if epoch == 0:
            W_avg, b_avg = W.copy(), b.copy()
            n_avg = 1
        if not (np.all(np.isfinite(W_avg)) and np.all(np.isfinite(b_avg))):
            raise NonFiniteLoss(f"{strategy.value} diverged at epoch {epoch + 1} (C={C})")
        if trace is not None:
            trace.objectives.append(objective(strategy, W_avg, b_avg, X, y, sw, C))
    return LinearModel(W_avg, b_avg, strategy, C)


# -- cross-validation --------------------------------------------------------


@dataclass
class CVPlan:
    k: int = 10
    grid: tuple = C_GRID
    seed: int = 0


def stratified_folds(y, k: int, seed: int = 0) -> list[np.ndarray]:
    """Split indices into ``k`` folds, dealing each class out round-robin.

    The dealing position carries over between classes so fold sizes stay
    within one of each other as well.
    """
    y = np.asarray(y)
    if len(y) < k:
        raise TooFewExamples(k, f"{len(y)} examples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        for i in members:
            folds[pos % k].append(int(i))
            pos += 1
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class FitRecord:
    C: float
    fold: int
    mae_macro: float
    micro_f1: float


@dataclass
class GridResult:
    strategy: Strategy
    best_C: float
    mean_mae: dict
    mean_f1: dict
    records: list[FitRecord]
    model: LinearModel | None = None


Scorer = Callable[[LinearModel, np.ndarray, np.ndarray, float, int], tuple]


def _default_scorer(n_classes):
    def score(model, X_val, y_val, C, fold):
        pred = model.predict(X_val)
        return mae_macro(y_val, pred, n_classes), micro_f1(y_val, pred, n_classes)
    return score


def grid_search_cv(strategy: Strategy | str, X, y, plan: CVPlan | None = None, n_classes: int | None = None,
                   class_weights=None, fit_fn=None, scorer: Scorer | None = None, refit: bool = True,
                   **fit_kwargs) -> GridResult:
    """Pick C by mean validation MAE_M over stratified folds (ties go to the smaller C)."""
    strategy = Strategy(strategy)
    plan = plan or CVPlan()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    K = n_classes if n_classes is not None else int(y.max()) + 1
    fit_fn = fit_fn or fit
    scorer = scorer or _default_scorer(K)
    folds = stratified_folds(y, plan.k, plan.seed)
    records = []
    mean_mae, mean_f1 = {}, {}
    for C in sorted(plan.grid):
        maes, f1s = [], []
        for f, val_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(len(y)), val_idx, assume_unique=True)
            model = fit_fn(strategy, X[train_idx], y[train_idx], class_weights, C, n_classes=K, **fit_kwargs)
            mae, f1 = scorer(model, X[val_idx], y[val_idx], C, f)
            records.append(FitRecord(C, f, float(mae), float(f1)))
            maes.append(mae)
            f1s.append(f1)
        mean_mae[C] = float(np.mean(maes))
        mean_f1[C] = float(np.mean(f1s))
    best_C = None
    for C in sorted(plan.grid):
        if best_C is None or mean_mae[C] < mean_mae[best_C]:
            best_C = C
    result = GridResult(strategy, best_C, mean_mae, mean_f1, records)
    if refit:
        result.model = fit_fn(strategy, X, y, class_weights, best_C, n_classes=K, **fit_kwargs)
    return result


def _fmt_c(C: float) -> str:
    return f"{C:g}"


def write_tuning_report(result: GridResult, stream: TextIO) -> None:
    stream.write("strategy\tC\tfold\tMAE_M\tmicro_F1\n")
    s = result.strategy.value
    for r in result.records:
        stream.write(f"{s}\t{_fmt_c(r.C)}\t{r.fold}\t{r.mae_macro:.6f}\t{r.micro_f1:.6f}\n")
    for C in sorted(result.mean_mae):
        stream.write(f"{s}\t{_fmt_c(C)}\tmean\t{result.mean_mae[C]:.6f}\t{result.mean_f1[C]:.6f}\n")

