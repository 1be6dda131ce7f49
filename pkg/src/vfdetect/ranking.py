"""Random-forest feature ranking by mean decrease in Gini impurity."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DecisionTree",
    "RandomForestModel",
    "FeatureMask",
    "grow_tree",
    "train_forest",
    "feature_importances",
    "select_top_fraction",
]

log = logging.getLogger(__name__)

LEAF = -1


@dataclass(eq=False)
class DecisionTree:
    """Flat array form of a fitted tree.  Leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # class proportions per node
    impurity: np.ndarray
    n_samples: np.ndarray
    oob_index: np.ndarray = field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def __eq__(self, other):
        if not isinstance(other, DecisionTree):
            return NotImplemented
        names = ("feature", "threshold", "left", "right", "value", "impurity", "n_samples")
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in names)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            f = self.feature[node[active]]
            go_left = X[active, f] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def importances(self, n_features: int) -> np.ndarray:
        imp = np.zeros(n_features)
        for t in np.flatnonzero(self.feature != LEAF):
            l, r = self.left[t], self.right[t]
            imp[self.feature[t]] += (
                self.n_samples[t] * self.impurity[t]
                - self.n_samples[l] * self.impurity[l]
                - self.n_samples[r] * self.impurity[r]
            )
        return imp


def _gini(counts: np.ndarray, n: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[..., None]
    return 1.0 - np.sum(p * p, axis=-1)


def _best_split(X, Y, idx, feats, min_leaf):
    """Best (weighted gini, feature, threshold) over ``feats``, or None.

    Also reports which of ``feats`` were constant on the node.
    """
    Xs = X[np.ix_(idx, feats)]
    order = np.argsort(Xs, axis=0, kind="stable")
    vals = np.take_along_axis(Xs, order, axis=0)
    constant = vals[0] == vals[-1]
    n = len(idx)
    cum = np.cumsum(Y[idx][order], axis=0)  # (n, m, K)
    total = cum[-1]
    # candidate split after sorted position p-1, p in [min_leaf, n - min_leaf]
    p = np.arange(min_leaf, n - min_leaf + 1)
    if p.size == 0:
        return None, constant
    left = cum[p - 1]
    right = total[None] - left
    nl = p.astype(float)[:, None]
    nr = n - nl
    score = (nl * _gini(left, nl) + nr * _gini(right, nr)) / n
    valid = vals[p - 1] < vals[p]
    score = np.where(valid, score, np.inf)
    flat = int(np.argmin(score))
    i, j = divmod(flat, score.shape[1])
    if not np.isfinite(score[i, j]):
        return None, constant
    lo, hi = vals[p[i] - 1, j], vals[p[i], j]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return (float(score[i, j]), int(feats[j]), float(thr)), constant


def grow_tree(
    X: np.ndarray,
    y_codes: np.ndarray,
    n_classes: int,
    rng: np.random.Generator,
    max_features: int,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    bootstrap: bool = True,
) -> DecisionTree:
    n, d = X.shape
    Y = np.eye(n_classes)[y_codes]
    if bootstrap:
        root = rng.integers(0, n, n)
        oob = np.setdiff1d(np.arange(n), root)
    else:
        root = np.arange(n)
        oob = np.empty(0, dtype=np.int64)

    feature, threshold, left, right, value, impurity, counts = [], [], [], [], [], [], []

    def new_node(idx):
        c = Y[idx].sum(axis=0)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(c / len(idx))
        impurity.append(float(_gini(c[None], np.array([len(idx)], float))[0]))
        counts.append(len(idx))
        return len(feature) - 1

    stack = [(new_node(root), root, 0)]
    while stack:
        node, idx, depth = stack.pop()
        parent_imp = impurity[node]
        if (
            parent_imp <= 0.0
            or len(idx) < 2 * min_samples_leaf
            or (max_depth is not None and depth >= max_depth)
        ):
            continue
        # draw features until max_features non-constant ones have been tried
        perm = rng.permutation(d)
        best, tried, start = None, 0, 0
        while tried < max_features and start < d:
            feats = perm[start:start + max_features - tried]
            start += len(feats)
            cand, constant = _best_split(X, Y, idx, feats, min_samples_leaf)
            tried += int(np.count_nonzero(~constant))
            if cand is not None and (best is None or cand[0] < best[0]):
                best = cand
        if best is None or best[0] >= parent_imp - 1e-12:
            continue
        _, f, thr = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value),
        impurity=np.array(impurity),
        n_samples=np.array(counts, dtype=np.int64),
        oob_index=oob,
    )


@dataclass(eq=False)
class RandomForestModel:
    trees: list[DecisionTree]
    tree_seeds: np.ndarray
    classes: np.ndarray
    n_features: int
    max_features: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def __eq__(self, other):
        if not isinstance(other, RandomForestModel):
            return NotImplemented
        return (
            np.array_equal(self.tree_seeds, other.tree_seeds)
            and np.array_equal(self.classes, other.classes)
            and self.trees == other.trees
        )

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]

    def oob_score(self, X, y) -> float:
        """Accuracy of out-of-bag votes over samples left out by some tree."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        votes = np.zeros((len(X), len(self.classes)))
        for t in self.trees:
            if t.oob_index is not None and t.oob_index.size:
                votes[t.oob_index] += t.predict_proba(X[t.oob_index])
        seen = votes.sum(axis=1) > 0
        if not seen.any():
            raise ValueError("no out-of-bag samples")
        pred = self.classes[np.argmax(votes[seen], axis=1)]
        return float(np.mean(pred == y[seen]))


def train_forest(
    X,
    y,
    n_trees: int = 750,
    max_features: int | None = None,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    seed: int = 0,
    bootstrap: bool = True,
) -> RandomForestModel:
    """Grow ``n_trees`` Gini trees on bootstrap resamples of ``(X, y)``.

    ``max_features`` defaults to ``round(sqrt(n_features))``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("X must be a 2-D matrix with at least one feature")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} rows but {len(y)} labels")
    classes, codes = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("random forest needs at least two classes")
    d = X.shape[1]
    mf = max_features or max(1, int(round(np.sqrt(d))))
    mf = min(mf, d)
    seeds = np.random.default_rng(seed).integers(0, 2**63 - 1, n_trees)
    trees = [
        grow_tree(
            X, codes, len(classes), np.random.default_rng(s), mf,
            max_depth=max_depth, min_samples_leaf=min_samples_leaf, bootstrap=bootstrap,
        )
        for s in seeds
    ]
    log.debug("grew %d trees, mean %.1f nodes", n_trees, np.mean([t.n_nodes for t in trees]))
    return RandomForestModel(trees=trees, tree_seeds=seeds, classes=classes, n_features=d, max_features=mf)


def feature_importances(model: RandomForestModel) -> np.ndarray:
    """Mean per-tree normalized Gini decrease, renormalized to sum to 1."""
    per_tree = []
    for t in model.trees:
        imp = t.importances(model.n_features)
        s = imp.sum()
        if s > 0:
            per_tree.append(imp / s)
    if not per_tree:
        return np.zeros(model.n_features)
    imp = np.mean(per_tree, axis=0)
    return imp / imp.sum()


@dataclass(frozen=True)
class FeatureMask:
    selected_indices: np.ndarray
    fraction: float
    dim: int

    def apply(self, X) -> np.ndarray:
        return np.asarray(X)[..., self.selected_indices]

    def __len__(self):
        return len(self.selected_indices)


def select_top_fraction(importances, fraction: float = 0.24) -> FeatureMask:
    """Indices of the ``round(fraction * dim)`` most important features.

    Ties go to the lower index; the result is sorted ascending.
    """
    imp = np.asarray(importances, dtype=float)
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    dim = imp.size
    k = int(np.floor(fraction * dim + 0.5))
    order = np.lexsort((np.arange(dim), -imp))
    return FeatureMask(np.sort(order[:k]), fraction, dim)
