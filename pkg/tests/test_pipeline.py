import numpy as np
import pytest

from vfdetect import PipelineConfig, episode_features, extract_features, fit_model, predict_episodes, rank_features
from vfdetect.emd import decompose, select_components
from vfdetect.ingest import EcgEpisode, Rhythm, extract_episodes
from vfdetect.pipeline import cross_validate, episode_labels
from vfdetect.spectral import cosine_similarity
from vfdetect.synth import make_corpus, make_record, qrs_like, tone, tone_mixture, vf_like


def test_generators():
    rng = np.random.default_rng(0)
    assert tone(250, 250.0, 1.0)[63] == pytest.approx(np.sin(2 * np.pi * 63 / 250))
    np.testing.assert_allclose(tone_mixture(100, 250.0, [3, 7]), tone(100, 250.0, 3) + tone(100, 250.0, 7))
    for gen in (vf_like, qrs_like):
        x = gen(1250, 250.0, rng)
        assert x.shape == (1250,) and np.all(np.isfinite(x))


def test_corpus_is_deterministic_and_balanced():
    a, b = make_corpus(5, 7, seed=3), make_corpus(5, 7, seed=3)
    assert sum(e.is_vf for e in a) == 5 and len(a) == 12
    assert all(np.array_equal(x.samples, y.samples) and x.label == y.label for x, y in zip(a, b))


def test_record_annotations_drive_episode_labels():
    rec = make_record([(Rhythm.NOT_VF, 6), (Rhythm.VF, 6), (Rhythm.NOISE, 2)], seed=0)
    eps = extract_episodes(rec, 5.0, 1.0)
    labels = [e.label for e in eps]
    # windows start at 0..7 s; 8+ would overlap noise
    assert len(eps) == 8
    assert labels[:4] == [Rhythm.NOT_VF] * 4 and labels[4:] == [Rhythm.VF] * 4


def test_episode_features_shape_and_identity():
    ep = make_corpus(1, 0, seed=1)[0]
    f = episode_features(ep)
    row = f.row()
    assert row.shape == (2 * len(ep.samples),)
    n = len(ep.samples)
    parts = select_components(f.filtered, decompose(f.filtered))
    assert row[:n].sum() == pytest.approx(cosine_similarity(f.filtered, parts.imf), abs=1e-9)
    assert row[n:].sum() == pytest.approx(cosine_similarity(f.filtered, parts.residue), abs=1e-9)


def test_extract_features_skips_failures():
    good = make_corpus(2, 2, seed=2)
    bad = EcgEpisode(np.zeros(2), 250.0, 0.008, Rhythm.VF, "bad", 0)
    X, kept = extract_features([good[0], bad, *good[1:]])
    assert kept.tolist() == [0, 2, 3, 4] and X.shape == (4, 2500)
    Xp, keptp = extract_features([good[0], bad, *good[1:]], jobs=2)
    assert np.array_equal(X, Xp) and np.array_equal(kept, keptp)


@pytest.mark.slow
def test_small_end_to_end():
    cfg = PipelineConfig(rf_n_trees=30, cv_folds=5)
    eps = make_corpus(40, 60, seed=4)
    X, kept = extract_features(eps, cfg)
    y = episode_labels([eps[i] for i in kept])
    imp, mask = rank_features(X, y, cfg)
    assert len(mask) == 600 and imp.sum() == pytest.approx(1.0)
    model = fit_model(X, y, mask, cfg)
    labels, dec = predict_episodes(model, X)
    assert np.mean(labels == y) > 0.95 and dec.shape == y.shape
    rep = cross_validate(X, y, mask, cfg)
    assert rep.mean("g_mean") > 0.9
    # SMOTE in the unmasked space then masking gives the same sample count
    rep2 = cross_validate(X, y, mask, cfg.replace(smote_masked_space=False))
    assert sum(f.n_test for f in rep2.folds) == sum(f.n_test for f in rep.folds) == 120
