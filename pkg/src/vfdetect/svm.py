"""RBF-kernel support vector classifier trained by SMO.

The soft-margin dual

    min  0.5 * a' Q a - sum(a)    s.t.  y' a = 0,  0 <= a_i <= C,
    Q_ij = y_i y_j K(x_i, x_j)

is solved by sequential minimal optimization with second-order working
set selection (Fan, Chen & Lin, 2005).  Shrinking is not used.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .metrics import ConfusionMatrix, metrics

__all__ = [
    "SvmModel",
    "GridSearchSpec",
    "GridSearchResult",
    "ConvergenceError",
    "rbf_kernel",
    "kernel_matrix",
    "train",
    "predict",
    "decision_function",
    "dual_objective",
    "kkt_violations",
    "grid_search",
]

log = logging.getLogger(__name__)

TAU = 1e-12
# Gram matrices up to this many rows are held in memory whole
FULL_GRAM_LIMIT = 6000


class ConvergenceError(RuntimeError):
    pass


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    c: float
    feature_mask: np.ndarray | None = None
    n_iter: int = 0
    objective: float = float("nan")
    max_violation: float = float("nan")
    alpha: np.ndarray | None = field(default=None, repr=False)  # full-length, training order


def rbf_kernel(x, x2, gamma: float) -> float:
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    d = x - x2
    return float(np.exp(-gamma * np.dot(d, d)))


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", A, A)[:, None]
        + np.einsum("ij,ij->i", B, B)[None, :]
        - 2.0 * A @ B.T
    )
    return np.maximum(d2, 0.0)


def kernel_matrix(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return np.exp(-gamma * _sq_dists(A, B))


class _Gram:
    """Kernel columns, whole matrix for small problems, LRU-cached otherwise."""

    def __init__(self, X: np.ndarray, gamma: float, cache_columns: int = 2000):
        self.X, self.gamma = X, gamma
        self.full = kernel_matrix(X, X, gamma) if len(X) <= FULL_GRAM_LIMIT else None
        self.sq = np.einsum("ij,ij->i", X, X)
        self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.cache_columns = cache_columns

    def column(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[:, i]
        col = self.cache.get(i)
        if col is None:
            d2 = np.maximum(self.sq + self.sq[i] - 2.0 * self.X @ self.X[i], 0.0)
            col = np.exp(-self.gamma * d2)
            self.cache[i] = col
            if len(self.cache) > self.cache_columns:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return col


def _violating_pair(alpha, y, G, C):
    """Masks of I_up / I_low and the maximal violation m - M."""
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    minus_yg = -y * G
    m = np.max(minus_yg[up]) if up.any() else -np.inf
    M = np.min(minus_yg[low]) if low.any() else np.inf
    return up, low, minus_yg, m, M


def train(
    X,
    y,
    C: float = 100.0,
    gamma: float = 45.0,
    tol: float = 1e-3,
    max_iter: int = 10_000_000,
) -> SvmModel:
    """Fit the RBF SVM on ``(X, y)`` with labels in {-1, +1}."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not ((y > 0).any() and (y < 0).any()):
        raise ValueError("training data must contain both classes")
    if C <= 0:
        raise ValueError("C must be positive")

    n = len(y)
    gram = _Gram(X, gamma)
    kdiag = np.ones(n)  # RBF: K(x, x) = 1
    alpha = np.zeros(n)
    G = -np.ones(n)

    it = 0
    while True:
        up, low, minus_yg, m, M = _violating_pair(alpha, y, G, C)
        if m - M < tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"SMO did not converge in {max_iter} updates (max violation {m - M:.3g})"
            )
        i = int(np.flatnonzero(up)[np.argmax(minus_yg[up])])
        Ki = gram.column(i)
        cand = np.flatnonzero(low & (minus_yg < m))
        b = m - minus_yg[cand]
        a = kdiag[i] + kdiag[cand] - 2.0 * Ki[cand]
        a = np.where(a > 0, a, TAU)
        j = int(cand[np.argmin(-(b * b) / a)])
        Kj = gram.column(j)

        # step along  alpha_i += y_i * d,  alpha_j -= y_j * d
        aij = max(kdiag[i] + kdiag[j] - 2.0 * Ki[j], TAU)
        d = (m - minus_yg[j]) / aij
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        d = min(d, lim_i, lim_j)
        alpha[i] += y[i] * d
        alpha[j] -= y[j] * d
        # snap onto the box so the index sets stay exact
        for t, lim in ((i, lim_i), (j, lim_j)):
            if d == lim:
                alpha[t] = 0.0 if alpha[t] < 0.5 * C else C
        G += d * y * (Ki - Kj)
        it += 1

    free = (alpha > 0) & (alpha < C)
    yg = y * G
    if free.any():
        rho = float(np.mean(yg[free]))
    else:
        # rho lies between the bounded samples' y*G values
        ub = np.min(np.where((y < 0) & (alpha >= C) | (y > 0) & (alpha <= 0), yg, np.inf))
        lb = np.max(np.where((y > 0) & (alpha >= C) | (y < 0) & (alpha <= 0), yg, -np.inf))
        finite = [v for v in (ub, lb) if np.isfinite(v)]
        rho = float(np.mean(finite)) if finite else 0.0

    sv = alpha > 0
    obj = 0.5 * float(np.dot(alpha, G - 1.0))
    log.debug("SMO: %d updates, %d support vectors, objective %.6g", it, sv.sum(), obj)
    return SvmModel(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * y)[sv],
        bias=-rho,
        gamma=gamma,
        c=C,
        n_iter=it,
        objective=obj,
        max_violation=float(m - M),
        alpha=alpha,
    )


def decision_function(model: SvmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if len(model.dual_coef) == 0:
        out = np.full(len(X), model.bias)
    else:
        if X.shape[1] != model.support_vectors.shape[1]:
            raise ValueError(
                f"dimension mismatch: model has {model.support_vectors.shape[1]} features, "
                f"input has {X.shape[1]}"
            )
        out = kernel_matrix(X, model.support_vectors, model.gamma) @ model.dual_coef + model.bias
    return out[0] if single else out


def predict(model: SvmModel, X):
    """Labels (+1 on an exact tie) and decision values."""
    dec = decision_function(model, X)
    labels = np.where(np.asarray(dec) >= 0, 1, -1)
    if np.ndim(dec) == 0:
        return int(labels), float(dec)
    return labels, dec


def dual_objective(alpha, X, y, gamma: float) -> float:
    alpha = np.asarray(alpha, dtype=float)
    y = np.asarray(y, dtype=float)
    Q = np.outer(y, y) * kernel_matrix(X, X, gamma)
    return 0.5 * float(alpha @ Q @ alpha) - float(alpha.sum())


def kkt_violations(model: SvmModel, X, y) -> np.ndarray:
    """Per-sample KKT residual of a model trained on ``(X, y)``.

    Zero means the sample's condition holds: ``y f(x) >= 1`` at
    ``alpha = 0``, ``= 1`` when free, ``<= 1`` at ``alpha = C``.
    """
    if model.alpha is None:
        raise ValueError("model does not carry its training multipliers")
    y = np.asarray(y, dtype=float)
    a = model.alpha
    margin = y * decision_function(model, X)
    v = np.zeros(len(y))
    at0, atc = a <= 0, a >= model.c
    free = ~at0 & ~atc
    v[at0] = np.maximum(0.0, 1.0 - margin[at0])
    v[atc] = np.maximum(0.0, margin[atc] - 1.0)
    v[free] = np.abs(margin[free] - 1.0)
    return v


@dataclass(frozen=True)
class GridSearchSpec:
    c_values: tuple[float, ...] = (1.0, 10.0, 100.0)
    gamma_values: tuple[float, ...] = (15.0, 30.0, 45.0, 60.0)
    objective: str = "g_mean"

    def __post_init__(self):
        if not self.c_values or not self.gamma_values:
            raise ValueError("grid must not be empty")
        if min(self.c_values) <= 0 or min(self.gamma_values) <= 0:
            raise ValueError("grid values must be positive")
        if self.objective not in ("g_mean", "accuracy", "sensitivity", "specificity"):
            raise ValueError(f"unknown objective {self.objective!r}")


@dataclass
class GridSearchResult:
    best_c: float
    best_gamma: float
    report: list[dict]

    def table(self) -> str:
        rows = ["C\tgamma\tsensitivity\tspecificity\taccuracy\tg_mean"]
        for r in self.report:
            vals = [r[k] for k in ("sensitivity", "specificity", "accuracy", "g_mean")]
            rows.append(
                f"{r['c']:g}\t{r['gamma']:g}\t"
                + "\t".join("NA" if v is None else f"{v:.6f}" for v in vals)
            )
        return "\n".join(rows)


def grid_search(X_train, y_train, X_val, y_val, spec: GridSearchSpec | None = None,
                tol: float = 1e-3) -> GridSearchResult:
    """Train on every (C, gamma) and keep the best validation score.

    Ties keep the earliest grid point (C-major order).
    """
    spec = spec or GridSearchSpec()
    report = []
    best, best_score = None, -np.inf
    for c, g in product(spec.c_values, spec.gamma_values):
        model = train(X_train, y_train, C=c, gamma=g, tol=tol)
        labels, _ = predict(model, X_val)
        row = {"c": c, "gamma": g, **metrics(ConfusionMatrix.from_labels(y_val, labels)).as_dict()}
        report.append(row)
        score = row[spec.objective]
        score = -np.inf if score is None else score
        if score > best_score:
            best, best_score = (c, g), score
    if best is None:
        best = (spec.c_values[0], spec.gamma_values[0])
    return GridSearchResult(best_c=best[0], best_gamma=best[1], report=report)
