"""End-to-end stages: episode features, ranking, model fitting, prediction."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import svm
from .balance import balance_dataset
from .config import PipelineConfig
from .emd import decompose, select_components
from .evaluate import EvalReport, class_subsample, run_cross_validation
from .ingest import EcgEpisode
from .preprocess import preprocess_pipeline
from .ranking import FeatureMask, feature_importances, select_top_fraction, train_forest
from .spectral import FeatureVector, dft, frequency_similarity_features

__all__ = [
    "EpisodeFeatures",
    "episode_features",
    "extract_features",
    "episode_labels",
    "rank_features",
    "fit_model",
    "cross_validate",
    "predict_episodes",
]

log = logging.getLogger(__name__)


@dataclass
class EpisodeFeatures:
    features: FeatureVector
    filtered: np.ndarray
    nlcr: float
    used_two_imfs: bool

    def row(self) -> np.ndarray:
        return self.features.concat()


def episode_features(episode: EcgEpisode, cfg: PipelineConfig | None = None) -> EpisodeFeatures:
    """Filter, decompose, select components and compute the 2N features."""
    cfg = cfg or PipelineConfig()
    x = preprocess_pipeline(episode, cfg.filter_chain())
    emd_cfg = cfg.emd()
    parts = select_components(x, decompose(x, emd_cfg), emd_cfg)
    fv = frequency_similarity_features(dft(x), dft(parts.imf), dft(parts.residue))
    return EpisodeFeatures(fv, x, parts.nlcr, parts.used_two_imfs)


def _row_or_error(args):
    episode, cfg = args
    try:
        return episode_features(episode, cfg).row(), None
    except Exception as exc:  # one bad episode must not stop the run
        return None, f"{type(exc).__name__}: {exc}"


def extract_features(
    episodes: list[EcgEpisode], cfg: PipelineConfig | None = None, jobs: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix for ``episodes`` and the indices that succeeded.

    Failed episodes are logged and skipped.
    """
    cfg = cfg or PipelineConfig()
    tasks = [(ep, cfg) for ep in episodes]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_row_or_error, tasks, chunksize=16))
    else:
        results = [_row_or_error(t) for t in tasks]
    rows, kept = [], []
    for i, (row, err) in enumerate(results):
        if err is not None:
            ep = episodes[i]
            log.warning("skipping episode %s@%d: %s", ep.source, ep.start, err)
            continue
        rows.append(row)
        kept.append(i)
    dim = 2 * len(episodes[0].samples) if episodes else 0
    X = np.vstack(rows) if rows else np.empty((0, dim))
    return X, np.asarray(kept, dtype=np.int64)


def episode_labels(episodes: list[EcgEpisode]) -> np.ndarray:
    """+1 for VF, -1 otherwise."""
    return np.array([1 if ep.is_vf else -1 for ep in episodes], dtype=np.int64)


def rank_features(X, y, cfg: PipelineConfig | None = None) -> tuple[np.ndarray, FeatureMask]:
    """Forest importances on a class-count subsample, and the top-fraction mask."""
    cfg = cfg or PipelineConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    idx, _ = class_subsample(y, cfg.rank_vf_samples, cfg.rank_not_vf_samples, cfg.seed)
    log.info("ranking %d features on %d episodes with %d trees", X.shape[1], len(idx), cfg.rf_n_trees)
    forest = train_forest(
        X[idx],
        y[idx],
        n_trees=cfg.rf_n_trees,
        max_features=cfg.rf_max_features or None,
        max_depth=cfg.rf_max_depth or None,
        min_samples_leaf=cfg.rf_min_samples_leaf,
        seed=cfg.seed,
    )
    imp = feature_importances(forest)
    return imp, select_top_fraction(imp, cfg.feature_fraction)


def _balanced(X, y, mask: FeatureMask, cfg: PipelineConfig):
    if cfg.smote_masked_space:
        return balance_dataset(mask.apply(X), y, cfg.smote())
    Xb, yb = balance_dataset(X, y, cfg.smote())
    return mask.apply(Xb), yb


def fit_model(X, y, mask: FeatureMask, cfg: PipelineConfig | None = None) -> svm.SvmModel:
    """SMOTE-balance, then train the SVM on the masked features."""
    cfg = cfg or PipelineConfig()
    Xb, yb = _balanced(np.asarray(X, float), np.asarray(y), mask, cfg)
    model = svm.train(Xb, yb, C=cfg.svm_c, gamma=cfg.svm_gamma, tol=cfg.svm_tol)
    model.feature_mask = np.asarray(mask.selected_indices)
    return model


def cross_validate(X, y, mask: FeatureMask, cfg: PipelineConfig | None = None, jobs: int = 1) -> EvalReport:
    cfg = cfg or PipelineConfig()
    X = np.asarray(X, float)
    y = np.asarray(y)
    if cfg.smote_within_folds or cfg.smote_masked_space:
        return run_cross_validation(mask.apply(X), y, cfg, jobs)
    # balance in the full space, then mask; folds then see no further SMOTE
    Xb, yb = _balanced(X, y, mask, cfg)
    return run_cross_validation(Xb, yb, cfg, jobs)


def predict_episodes(model: svm.SvmModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Labels and decision values for full-width feature rows."""
    X = np.asarray(X, float)
    if model.feature_mask is not None:
        X = X[:, model.feature_mask]
    labels, dec = svm.predict(model, X)
    return np.atleast_1d(labels), np.atleast_1d(dec)
