"""Pipeline configuration: one flat set of fields, a key = value file, hashes.

Each stage's artifacts carry a hash of only the fields that stage (and
the stages before it) depend on, so changing e.g. ``svm_c`` does not
invalidate an episode or feature cache.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .balance import SmoteConfig
from .emd import EmdConfig
from .preprocess import FilterChainConfig

__all__ = ["PipelineConfig", "STAGE_FIELDS", "load_config", "parse_config", "dump_config"]


@dataclass(frozen=True)
class PipelineConfig:
    # ingestion
    episode_length_s: float = 5.0
    hop_s: float = 1.0
    channel: int = 0
    vf_threshold: float = 0.5
    vf_labels: str = "(VF,(VFL"
    # filter chain
    ma_order: int = 5
    hp_cutoff_hz: float = 1.0
    hp_order: int = 2
    lp_cutoff_hz: float = 20.0
    lp_order: int = 12
    # decomposition
    emd_alpha: float = 0.05
    emd_beta: float = 0.02
    emd_max_imfs: int = 2
    sift_sd_threshold: float = 0.2
    max_sift_iterations: int = 100
    noise_level_abs: bool = False
    invert_nlcr_branch: bool = False
    # ranking
    feature_fraction: float = 0.24
    rf_n_trees: int = 750
    rf_max_features: int = 0  # 0: sqrt(dim)
    rf_max_depth: int = 0  # 0: unlimited
    rf_min_samples_leaf: int = 1
    rank_vf_samples: int = 3000
    rank_not_vf_samples: int = 5000
    # balancing
    smote_k: int = 5
    smote_ratio: float = 1.0
    smote_within_folds: bool = False
    smote_masked_space: bool = True
    # classifier
    svm_c: float = 100.0
    svm_gamma: float = 45.0
    svm_tol: float = 1e-3
    grid_c: str = "1,10,100"
    grid_gamma: str = "15,30,45,60"
    split_vf_samples: int = 3000
    split_not_vf_samples: int = 5000
    # evaluation
    cv_folds: int = 10
    cv_stratified: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.episode_length_s <= 0 or self.hop_s <= 0:
            raise ValueError("episode_length_s and hop_s must be positive")
        if not 0 <= self.vf_threshold < 1:
            raise ValueError("vf_threshold must be in [0, 1)")
        if not 0 < self.feature_fraction <= 1:
            raise ValueError("feature_fraction must be in (0, 1]")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.rf_n_trees < 1:
            raise ValueError("rf_n_trees must be >= 1")
        if self.svm_c <= 0 or self.svm_gamma < 0 or self.svm_tol <= 0:
            raise ValueError("svm_c and svm_tol must be positive, svm_gamma non-negative")
        # component configs validate their own fields
        self.filter_chain()
        self.emd()
        self.smote()

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def filter_chain(self) -> FilterChainConfig:
        return FilterChainConfig(
            ma_order=self.ma_order,
            hp_cutoff_hz=self.hp_cutoff_hz,
            hp_order=self.hp_order,
            lp_cutoff_hz=self.lp_cutoff_hz,
            lp_order=self.lp_order,
        )

    def emd(self) -> EmdConfig:
        return EmdConfig(
            alpha=self.emd_alpha,
            beta=self.emd_beta,
            max_imfs=self.emd_max_imfs,
            sift_sd_threshold=self.sift_sd_threshold,
            max_sift_iterations=self.max_sift_iterations,
            noise_level_abs=self.noise_level_abs,
            invert_nlcr_branch=self.invert_nlcr_branch,
        )

    def smote(self, seed_offset: int = 0) -> SmoteConfig:
        return SmoteConfig(
            k_neighbors=self.smote_k, target_ratio=self.smote_ratio, seed=self.seed + seed_offset
        )

    def vf_label_set(self) -> tuple[str, ...]:
        return tuple(s.strip() for s in self.vf_labels.split(",") if s.strip())

    def grid(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        def parse(s):
            return tuple(float(v) for v in s.split(",") if v.strip())

        return parse(self.grid_c), parse(self.grid_gamma)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def stage_hash(self, stage: str) -> str:
        """Hex digest over the fields that ``stage`` depends on."""
        names = STAGE_FIELDS[stage]
        text = "\n".join(f"{k}={_format(getattr(self, k))}" for k in names)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_INGEST = ("episode_length_s", "hop_s", "channel", "vf_threshold", "vf_labels")
_FEATURES = _INGEST + (
    "ma_order", "hp_cutoff_hz", "hp_order", "lp_cutoff_hz", "lp_order",
    "emd_alpha", "emd_beta", "emd_max_imfs", "sift_sd_threshold",
    "max_sift_iterations", "noise_level_abs", "invert_nlcr_branch",
)
_RANK = _FEATURES + (
    "feature_fraction", "rf_n_trees", "rf_max_features", "rf_max_depth",
    "rf_min_samples_leaf", "rank_vf_samples", "rank_not_vf_samples", "seed",
)
STAGE_FIELDS = {
    "ingest": _INGEST,
    "features": _FEATURES,
    "rank": _RANK,
    "model": _RANK + (
        "smote_k", "smote_ratio", "smote_masked_space", "svm_c", "svm_gamma", "svm_tol",
    ),
    "all": tuple(f.name for f in fields(PipelineConfig)),
}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, typ, key: str):
    raw = raw.strip()
    if typ is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ValueError(f"{key}: expected {typ.__name__}, got {raw!r}") from None


_TYPES = {"float": float, "int": int, "bool": bool, "str": str}


def dump_config(cfg: PipelineConfig) -> str:
    return "".join(f"{f.name} = {_format(getattr(cfg, f.name))}\n" for f in fields(cfg))


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    base = base or PipelineConfig()
    types = {f.name: _TYPES[f.type] for f in fields(base)}
    changes = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        if key not in types:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        changes[key] = _parse(value, types[key], key)
    return base.replace(**changes)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return parse_config(Path(path).read_text())
