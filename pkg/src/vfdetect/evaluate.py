"""K-fold cross-validation and the evaluation report.

Fold statistics use the population standard deviation (divisor k).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import svm
from .balance import balance_dataset
from .config import PipelineConfig
from .metrics import ConfusionMatrix, Metrics, g_mean, metrics

__all__ = [
    "ConfusionMatrix",
    "Metrics",
    "metrics",
    "g_mean",
    "kfold_split",
    "class_subsample",
    "FoldResult",
    "EvalReport",
    "run_cross_validation",
]

METRIC_NAMES = ("sensitivity", "specificity", "accuracy", "g_mean")


def kfold_split(
    n: int,
    k: int = 10,
    stratified: bool = False,
    labels=None,
    seed: int = 0,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled k-fold (train, test) index pairs over ``range(n)``.

    Stratified folds deal each class's shuffled indices round-robin, so
    every fold holds floor or ceil of its share of each class.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"cannot make {k} folds from {n} samples")
    rng = np.random.default_rng(seed)
    if stratified:
        if labels is None:
            raise ValueError("stratified splitting needs labels")
        labels = np.asarray(labels)
        if len(labels) != n:
            raise ValueError(f"{len(labels)} labels for {n} samples")
        order = np.concatenate(
            [rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)]
        )
        fold_of = np.empty(n, dtype=np.int64)
        fold_of[order] = np.arange(n) % k
        tests = [np.sort(np.flatnonzero(fold_of == f)) for f in range(k)]
    else:
        tests = [np.sort(t) for t in np.array_split(rng.permutation(n), k)]
    everything = np.arange(n)
    return [(np.setdiff1d(everything, t), t) for t in tests]


def class_subsample(
    y, n_pos: int, n_neg: int, seed: int = 0, max_fraction: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Random ``n_pos`` positives and ``n_neg`` negatives, and the rest.

    Requests larger than ``max_fraction`` of a class are capped there.
    Returns sorted (chosen, remaining) index arrays.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    chosen = []
    for cls, want in ((1, n_pos), (-1, n_neg)):
        idx = rng.permutation(np.flatnonzero(y == cls))
        cap = int(math.floor(max_fraction * len(idx)))
        chosen.append(idx[: min(want, cap)])
    chosen = np.sort(np.concatenate(chosen))
    return chosen, np.setdiff1d(np.arange(len(y)), chosen)


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    train: Metrics
    test: Metrics
    train_cm: ConfusionMatrix
    test_cm: ConfusionMatrix


def _summary(values: list[float | None]) -> tuple[float | None, float | None, int]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None, 0
    a = np.asarray(vals)
    return float(a.mean()), float(a.std(ddof=0)), len(vals)


@dataclass
class EvalReport:
    folds: list[FoldResult]
    stratified: bool
    config: dict = field(default_factory=dict)
    config_hash: str = ""

    def summary(self, split: str = "test") -> dict[str, tuple[float | None, float | None, int]]:
        """metric -> (mean, population std, folds where defined)."""
        return {
            name: _summary([getattr(getattr(f, split), name) for f in self.folds])
            for name in METRIC_NAMES
        }

    def mean(self, name: str, split: str = "test") -> float | None:
        return self.summary(split)[name][0]

    def to_text(self) -> str:
        title = ("Stratified " if self.stratified else "") + f"{len(self.folds)}-Fold Cross Validation"
        lines = [
            title,
            "values in %, mean +/- population std over folds (divisor k)",
            f"{'Data':<14}" + "".join(f"{n:>22}" for n in METRIC_NAMES),
        ]
        for split, label in (("train", "Training Data"), ("test", "Test Data")):
            cells = []
            for name in METRIC_NAMES:
                mean, std, cnt = self.summary(split)[name]
                cell = "absent" if mean is None else f"{100 * mean:.3f} +/- {100 * std:.3f}"
                if mean is not None and cnt < len(self.folds):
                    cell += f" ({cnt} folds)"
                cells.append(f"{cell:>22}")
            lines.append(f"{label:<14}" + "".join(cells))
        return "\n".join(lines)

    def to_keyvalue(self) -> str:
        """One line per fold and split, then the summary lines."""
        out = [f"config_hash={self.config_hash}", "std=population"]

        def fmt(v):
            return "absent" if v is None else repr(v)

        for f in self.folds:
            for split in ("train", "test"):
                m = getattr(f, split)
                cm = getattr(f, split + "_cm")
                out.append(
                    f"fold={f.fold} split={split} n={cm.total} tp={cm.tp} fp={cm.fp} "
                    f"tn={cm.tn} fn={cm.fn} "
                    + " ".join(f"{n}={fmt(getattr(m, n))}" for n in METRIC_NAMES)
                )
        for split in ("train", "test"):
            for name, (mean, std, cnt) in self.summary(split).items():
                out.append(f"summary split={split} metric={name} mean={fmt(mean)} std={fmt(std)} folds={cnt}")
        return "\n".join(out) + "\n"


def _run_fold(args) -> FoldResult:
    fold, X_tr, y_tr, X_te, y_te, cfg = args
    if cfg.smote_within_folds:
        X_tr, y_tr = balance_dataset(X_tr, y_tr, cfg.smote(seed_offset=fold + 1))
    model = svm.train(X_tr, y_tr, C=cfg.svm_c, gamma=cfg.svm_gamma, tol=cfg.svm_tol)
    tr_cm = ConfusionMatrix.from_labels(y_tr, svm.predict(model, X_tr)[0])
    te_cm = ConfusionMatrix.from_labels(y_te, svm.predict(model, X_te)[0])
    return FoldResult(fold, len(y_tr), len(y_te), metrics(tr_cm), metrics(te_cm), tr_cm, te_cm)


def run_cross_validation(X, y, cfg: PipelineConfig | None = None, jobs: int = 1) -> EvalReport:
    """Cross-validate the SVM on (already masked) features ``X``, labels ±1.

    By default the whole set is SMOTE-balanced first and then split;
    ``cfg.smote_within_folds`` balances each training fold instead.
    """
    cfg = cfg or PipelineConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if not cfg.smote_within_folds:
        X, y = balance_dataset(X, y, cfg.smote())
    splits = kfold_split(len(y), cfg.cv_folds, cfg.cv_stratified, y, cfg.seed)
    tasks = [(f, X[tr], y[tr], X[te], y[te], cfg) for f, (tr, te) in enumerate(splits)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(_run_fold, tasks))
    else:
        folds = [_run_fold(t) for t in tasks]
    return EvalReport(
        folds=folds,
        stratified=cfg.cv_stratified,
        config=cfg.to_dict(),
        config_hash=cfg.stage_hash("all"),
    )
