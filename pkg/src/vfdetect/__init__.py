"""Ventricular fibrillation detection from short ECG episodes.

Episodes are filtered, split by empirical mode decomposition into an
oscillatory component and a residue, and described by how each DFT
coefficient of those components lines up with the signal's.  A random
forest picks the informative coefficients, SMOTE balances the classes
and an RBF support vector machine makes the call.
"""

from .config import PipelineConfig, load_config
from .ingest import EcgEpisode, EcgRecord, Rhythm, extract_episodes, read_record
from .pipeline import (
    cross_validate,
    episode_features,
    episode_labels,
    extract_features,
    fit_model,
    predict_episodes,
    rank_features,
)

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig",
    "load_config",
    "EcgEpisode",
    "EcgRecord",
    "Rhythm",
    "extract_episodes",
    "read_record",
    "episode_features",
    "extract_features",
    "episode_labels",
    "rank_features",
    "fit_model",
    "cross_validate",
    "predict_episodes",
]
