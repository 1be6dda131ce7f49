"""The whole detector on a synthetic corpus, in library calls.

The CLI does the same in stages with cached artifacts:

    vfdetect synth --out eps.vfe
    vfdetect features eps.vfe --out feats.vff
    vfdetect rank --features feats.vff --out mask.txt
    vfdetect evaluate --features feats.vff --mask mask.txt

Run:  python3 demos/synthetic_pipeline.py   (about half a minute)
"""

import time

import numpy as np

from vfdetect import PipelineConfig, cross_validate, extract_features, fit_model, predict_episodes, rank_features
from vfdetect.pipeline import episode_labels
from vfdetect.synth import make_corpus

cfg = PipelineConfig(rf_n_trees=200)
t0 = time.perf_counter()

# 300 VF-like against 500 QRS-like episodes, so SMOTE has work to do.
episodes = make_corpus(300, 500, seed=0)
X, kept = extract_features(episodes, cfg)
y = episode_labels([episodes[i] for i in kept])
print(f"features: {X.shape[0]} episodes x {X.shape[1]} ({time.perf_counter() - t0:.1f} s)")

imp, mask = rank_features(X, y, cfg)
n = X.shape[1] // 2
top = np.argsort(imp)[::-1][:5]
print("top features:", ", ".join(f"{'IMF' if i < n else 'R'} bin {i % n}" for i in top))
print(f"kept {len(mask)} of {mask.dim}")

report = cross_validate(X, y, mask, cfg)
print()
print(report.to_text())

model = fit_model(X, y, mask, cfg)
fresh = make_corpus(20, 20, seed=99)
labels, dec = predict_episodes(model, extract_features(fresh, cfg)[0])
truth = episode_labels(fresh)
print(f"\nheld-out corpus: {np.mean(labels == truth):.0%} correct, "
      f"{len(model.dual_coef)} support vectors, {time.perf_counter() - t0:.1f} s total")
