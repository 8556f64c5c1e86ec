import logging

import numpy as np
import pytest
from scipy.special import expit

from helpers import one_target
from iatrack.features import FeatureConfig
from iatrack.geometry import BoundingBox, Detection
from iatrack.kcf import KcfConfig, train_at
from iatrack.refresh import (
    Episode,
    RefreshClassifier,
    RefreshDecision,
    apply_refresh,
    classify,
    descriptor_length,
    load_classifier,
    load_weights,
    refresh_descriptor,
    restore_backup,
    save_classifier,
    save_weights,
    train_policy,
)

REFRESH, KEEP = RefreshDecision.REFRESH, RefreshDecision.KEEP
GT = BoundingBox(100, 100, 20, 40)


def toy_episodes(n, dim=6, seed=7, margin=0.5):
    """Descriptors whose sign along a fixed direction decides which box is better."""
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    eps = []
    while len(eps) < n:
        x = rng.normal(size=dim)
        proj = x @ direction
        if abs(proj) < margin:
            continue
        good, bad = GT.shifted(1, 0), GT.shifted(15, 0)
        det, pred = (good, bad) if proj > 0 else (bad, good)
        eps.append(Episode(x, GT, pred, det))
    return eps


def test_descriptor_blocks(stationary_seq):
    cfg = FeatureConfig()
    img = stationary_seq.frames[0]
    a, b = BoundingBox(140, 90, 24, 48), BoundingBox(150, 95, 26, 44)
    same = refresh_descriptor(img, a, a, cfg)
    half = same.size // 2
    assert same.size == descriptor_length(cfg) == 2 * 4 * 4 * 17
    np.testing.assert_array_equal(same[:half], same[half:])
    ab, ba = refresh_descriptor(img, a, b, cfg), refresh_descriptor(img, b, a, cfg)
    np.testing.assert_array_equal(ab[:half], ba[half:])
    np.testing.assert_array_equal(ab[half:], ba[:half])


def test_zero_classifier_keeps():
    decision, score = classify(RefreshClassifier.zeros(4), np.ones(4))
    assert decision is KEEP and score == 0.5


def test_classify_length_mismatch():
    with pytest.raises(ValueError):
        classify(RefreshClassifier.zeros(4), np.ones(5))


def test_score_monotone_in_response():
    clf = RefreshClassifier(np.array([1.0, -2.0]), 0.3)
    xs = [np.array([t, 0.0]) for t in np.linspace(-3, 3, 13)]
    scores = [classify(clf, x)[1] for x in xs]
    assert all(a < b for a, b in zip(scores, scores[1:]))
    assert scores[0] == pytest.approx(expit(-3 + 0.3))


def test_episode_label():
    assert Episode(np.zeros(1), GT, GT.shifted(9, 0), GT).correct is REFRESH
    assert Episode(np.zeros(1), GT, GT, GT.shifted(9, 0)).correct is KEEP
    # a tie keeps the current model
    assert Episode(np.zeros(1), GT, GT, GT).correct is KEEP


def test_perfect_classifier_unchanged():
    eps = toy_episodes(20)
    x = np.stack([e.descriptor for e in eps])
    y = np.array([e.correct is REFRESH for e in eps])
    # a least-squares direction that already separates the toy set
    w = np.linalg.lstsq(x, np.where(y, 1.0, -1.0), rcond=None)[0] * 10
    clf = RefreshClassifier(w, 0.0)
    assert all((classify(clf, e.descriptor)[0] is REFRESH) == yy for e, yy in zip(eps, y))
    out, report = train_policy(clf, eps, rng_seed=0)
    assert np.array_equal(out.weights, clf.weights) and out.bias == clf.bias
    assert report.pool_size == 0 and report.converged and report.epochs == 1


def test_single_mistake_adds_one_positive():
    ep = Episode(np.ones(3), GT, GT.shifted(12, 0), GT)
    clf = RefreshClassifier.zeros(3)
    _, report = train_policy(clf, [ep], rng_seed=0, max_epochs=1)
    assert report.mistakes[0] == 1 and report.pool_size == 1


def test_toy_set_converges():
    eps = toy_episodes(40, seed=7)
    clf, report = train_policy(RefreshClassifier.zeros(6), eps, rng_seed=7)
    assert report.converged and report.epochs <= 50
    assert all(classify(clf, e.descriptor)[0] is e.correct for e in eps)


def test_training_deterministic():
    eps = toy_episodes(40, seed=3)
    a, ra = train_policy(RefreshClassifier.zeros(6), eps, rng_seed=11)
    b, rb = train_policy(RefreshClassifier.zeros(6), eps, rng_seed=11)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias
    assert ra.mistakes == rb.mistakes


def test_cap_reached_is_reported(caplog):
    # contradictory labels on one descriptor can never be fit
    x = np.ones(2)
    eps = [Episode(x, GT, GT.shifted(12, 0), GT), Episode(x, GT, GT, GT.shifted(12, 0))]
    with caplog.at_level(logging.WARNING):
        _, report = train_policy(RefreshClassifier.zeros(2), eps, rng_seed=0, max_epochs=3)
    assert not report.converged and report.epochs == 3
    assert "did not reach" in caplog.text


@pytest.fixture(scope="module")
def grow_seq():
    return one_target(((1, 160.0, 120.0, 0.7), (2, 160.0, 120.0, 1.4)), frames=2)


def test_apply_keep_is_identity(grow_seq):
    f, k = FeatureConfig(), KcfConfig()
    img = grow_seq.frames[0]
    model = train_at(img, grow_seq.gt[0].box, 1, f, k)
    out, backup = apply_refresh(model, Detection(2, grow_seq.gt[1].box), KEEP, grow_seq.frames[1], f, k)
    assert out is model and backup is None


def test_apply_refresh_follows_scale(grow_seq):
    f, k = FeatureConfig(), KcfConfig()
    old_box, new_box = grow_seq.gt[0].box, grow_seq.gt[1].box
    model = train_at(grow_seq.frames[0], old_box, 1, f, k)
    out, backup = apply_refresh(model, Detection(2, new_box), REFRESH, grow_seq.frames[1], f, k)
    assert out.trained_at == 2 and out.target_box == new_box
    assert new_box.area / old_box.area == pytest.approx(4.0, rel=0.05)
    assert backup.previous is model and backup.saved_at == 2


def test_restore_is_single_use(grow_seq, caplog):
    f, k = FeatureConfig(), KcfConfig()
    old = train_at(grow_seq.frames[0], grow_seq.gt[0].box, 1, f, k)
    new, backup = apply_refresh(old, Detection(2, grow_seq.gt[1].box), REFRESH, grow_seq.frames[1], f, k)
    assert restore_backup(new, backup) is old
    with caplog.at_level(logging.INFO):
        assert restore_backup(new, None) is new
    assert "without a backup" in caplog.text


def test_weights_roundtrip(tmp_path):
    clf = RefreshClassifier(np.array([0.1, -2.5e-7, 3.0]), -0.25)
    save_classifier(tmp_path / "r.weights", clf)
    back = load_classifier(tmp_path / "r.weights")
    assert np.array_equal(back.weights, clf.weights) and back.bias == clf.bias


def test_weights_kind_and_corruption(tmp_path):
    save_weights(tmp_path / "p.weights", "pair", np.zeros(6), 0.0)
    with pytest.raises(ValueError, match="not a refresh policy"):
        load_classifier(tmp_path / "p.weights")
    (tmp_path / "bad.weights").write_text("hello\n")
    with pytest.raises(ValueError, match="not a weights file"):
        load_weights(tmp_path / "bad.weights")
    lines = (tmp_path / "p.weights").read_text().splitlines()
    (tmp_path / "short.weights").write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(ValueError, match="expected 6"):
        load_weights(tmp_path / "short.weights")

