"""SMOTE oversampling of the minority class."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["SmoteConfig", "smote_oversample", "balance_dataset", "n_synthetic_needed"]


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not 0 < self.target_ratio <= 1:
            raise ValueError(f"target_ratio must be in (0, 1], got {self.target_ratio}")


def n_synthetic_needed(n_minority: int, n_majority: int, target_ratio: float) -> int:
    """Synthetic samples needed so minority/majority reaches ``target_ratio``.

    The target count is rounded up, towards the majority count.
    """
    target = min(n_majority, math.ceil(target_ratio * n_majority - 1e-9))
    return max(0, target - n_minority)


def _nearest_neighbors(X: np.ndarray, k: int, chunk: int = 1024) -> np.ndarray:
    sq = np.einsum("ij,ij->i", X, X)
    out = np.empty((len(X), k), dtype=np.int64)
    for lo in range(0, len(X), chunk):
        rows = slice(lo, lo + chunk)
        d2 = sq[rows, None] + sq[None, :] - 2.0 * X[rows] @ X.T
        d2[np.arange(d2.shape[0]), np.arange(lo, lo + d2.shape[0])] = np.inf
        # stable sort keeps neighbor order deterministic under ties
        out[rows] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def smote_oversample(X_minority, n_majority: int, cfg: SmoteConfig | None = None) -> np.ndarray:
    """Synthetic minority rows ``x_i + u * (x_nn - x_i)``, ``u ~ U[0, 1]``.

    ``x_nn`` is one of the ``k`` Euclidean nearest minority neighbors of
    a uniformly drawn base sample ``x_i``.
    """
    cfg = cfg or SmoteConfig()
    X = np.asarray(X_minority, dtype=float)
    if X.ndim != 2:
        raise ValueError("X_minority must be a 2-D matrix")
    n = len(X)
    if n <= cfg.k_neighbors:
        raise ValueError(
            f"SMOTE with k={cfg.k_neighbors} needs at least {cfg.k_neighbors + 1} "
            f"minority samples, got {n}"
        )
    n_new = n_synthetic_needed(n, n_majority, cfg.target_ratio)
    if n_new == 0:
        return np.empty((0, X.shape[1]))
    nn = _nearest_neighbors(X, cfg.k_neighbors)
    rng = np.random.default_rng(cfg.seed)
    base = rng.integers(0, n, n_new)
    pick = nn[base, rng.integers(0, cfg.k_neighbors, n_new)]
    u = rng.random(n_new)[:, None]
    return X[base] + u * (X[pick] - X[base])


def balance_dataset(X, y, cfg: SmoteConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Append SMOTE rows for the smaller class of a two-class set."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2:
        raise ValueError("balancing needs exactly two classes")
    minority = classes[np.argmin(counts)]
    synth = smote_oversample(X[y == minority], int(counts.max()), cfg)
    return (
        np.vstack([X, synth]),
        np.concatenate([y, np.full(len(synth), minority, dtype=y.dtype)]),
    )
