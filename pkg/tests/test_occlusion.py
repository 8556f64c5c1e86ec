import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iatrack.geometry import BoundingBox, Detection
from iatrack.occlusion import (
    PairFeature,
    PairScorer,
    Snapshot,
    assignment_cost,
    color_histogram,
    crop,
    default_pair_scorer,
    hungarian,
    interpolate_gap,
    load_pair_scorer,
    pair_feature,
    recover_occluded,
    save_pair_scorer,
    train_pair_scorer,
)


def brute_min(cost):
    m, n = cost.shape
    best = np.inf
    if m <= n:
        for perm in itertools.permutations(range(n), m):
            best = min(best, sum(cost[i, perm[i]] for i in range(m)))
    else:
        for perm in itertools.permutations(range(m), n):
            best = min(best, sum(cost[perm[j], j] for j in range(n)))
    return best


def solid(color, h=20, w=10):
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[:] = color
    return img


def test_identical_pair_feature():
    patch = np.random.default_rng(0).integers(0, 256, (40, 20, 3), dtype=np.uint8)
    box = BoundingBox(10, 10, 20, 40)
    f = pair_feature(Snapshot(3, box, patch), 5, box, patch)
    assert tuple(f) == (2, 0, 0, 0, 1, pytest.approx(1.0))


def test_horizontal_shift_by_mean_height():
    b1 = BoundingBox(0, 0, 10, 30)
    f = pair_feature(Snapshot(1, b1, solid(50)), 2, b1.shifted(30, 0), solid(50))
    assert f.dx_norm == 1.0 and f.dy_norm == 0.0


def test_disjoint_boxes_and_colours():
    f = pair_feature(
        Snapshot(1, BoundingBox(0, 0, 10, 20), solid((250, 0, 0))),
        4,
        BoundingBox(50, 50, 10, 20),
        solid((0, 0, 250)),
    )
    assert f.iou == 0.0 and f.hist_intersection == 0.0


def test_pair_feature_needs_later_detection():
    s = Snapshot(4, BoundingBox(0, 0, 1, 1), solid(1))
    with pytest.raises(ValueError):
        pair_feature(s, 4, BoundingBox(0, 0, 1, 1), solid(1))


def test_histogram_is_normalised():
    h = color_histogram(np.random.default_rng(1).integers(0, 256, (9, 7, 3), dtype=np.uint8))
    assert h.shape == (512,) and h.sum() == pytest.approx(1.0)
    assert color_histogram(solid(128, 3, 3)).max() == 1.0


def test_crop_outside_raises():
    with pytest.raises(ValueError):
        crop(np.zeros((10, 10, 3)), BoundingBox(20, 20, 5, 5))


def separable_pairs(scale=1.0, seed=0):
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for _ in range(120):
        same = bool(rng.random() < 0.5)
        hist = rng.uniform(0.7, 1.0) if same else rng.uniform(0.0, 0.3)
        f = PairFeature(float(rng.integers(1, 8)), *rng.normal(0, 0.3, 3), rng.uniform(0, 1), hist)
        feats.append(PairFeature(*(np.array(f) * scale)))
        labels.append(same)
    return feats, labels


def test_pair_scorer_fits_separable_set():
    feats, labels = separable_pairs()
    scorer = train_pair_scorer(feats, labels)
    assert all((scorer.score(f) > 0) == y for f, y in zip(feats, labels))


def test_pair_scorer_scale_invariant_signs():
    feats, labels = separable_pairs()
    a = train_pair_scorer(feats, labels)
    feats2, _ = separable_pairs(scale=2.0)
    b = train_pair_scorer(feats2, labels, reg=1e-3 / 4)
    assert [a.score(f) > 0 for f in feats] == [b.score(f) > 0 for f in feats2]


def test_pair_scorer_deterministic():
    feats, labels = separable_pairs(seed=3)
    a, b = train_pair_scorer(feats, labels, seed=5), train_pair_scorer(feats, labels, seed=5)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_pair_scorer_needs_both_classes():
    feats, _ = separable_pairs()
    with pytest.raises(ValueError):
        train_pair_scorer(feats, [True] * len(feats))


def test_pair_scorer_roundtrip(tmp_path):
    s = default_pair_scorer()
    save_pair_scorer(tmp_path / "pair.weights", s)
    back = load_pair_scorer(tmp_path / "pair.weights")
    assert np.array_equal(back.weights, s.weights) and back.bias == s.bias
    with pytest.raises(ValueError):
        PairScorer(np.zeros(5))


def test_hungarian_diagonal():
    assert hungarian(np.array([[0, 9], [9, 0]])) == [0, 1]


def test_hungarian_anti_diagonal():
    cost = np.array([[4.0, 1.0], [2.0, 0.0]])
    a = hungarian(cost)
    assert a == [1, 0] and assignment_cost(cost, a) == 3


def test_hungarian_tie_is_lexicographic():
    assert hungarian(np.ones((3, 3))) == [0, 1, 2]


def test_hungarian_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(200):
        cost = rng.uniform(-5, 10, (6, 6))
        assert assignment_cost(cost, hungarian(cost)) == pytest.approx(brute_min(cost), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10_000))
def test_hungarian_rectangular(m, n, seed):
    cost = np.random.default_rng(seed).integers(0, 6, (m, n)).astype(float)
    a = hungarian(cost)
    cols = [j for j in a if j is not None]
    assert len(cols) == len(set(cols)) == min(m, n)
    assert assignment_cost(cost, a) == pytest.approx(brute_min(cost))


def test_hungarian_forbidden_pairs():
    inf = np.inf
    cost = np.array([[inf, 1.0], [inf, 2.0]])
    assert hungarian(cost) == [1, None]
    assert hungarian(np.full((2, 2), inf)) == [None, None]
    with pytest.raises(ValueError):
        hungarian(np.array([[np.nan]]))
    assert hungarian(np.zeros((0, 3))) == [] and hungarian(np.zeros((2, 0))) == [None, None]


def _scene():
    img = np.zeros((60, 100, 3), dtype=np.uint8)
    img[10:30, 10:20] = (220, 30, 30)
    img[10:30, 60:70] = (30, 30, 220)
    return img


def test_recover_empty_and_single():
    img = _scene()
    red = Snapshot(1, BoundingBox(12, 10, 10, 20), img[10:30, 12:22].copy())
    assert recover_occluded([(1, red)], [], img, default_pair_scorer()) == []
    (m,) = recover_occluded([(1, red)], [Detection(4, BoundingBox(10, 10, 10, 20))], img, default_pair_scorer())
    assert m.target_id == 1 and m.detection == 0 and m.score > 0


def test_recover_crossing_follows_enumeration():
    img = _scene()
    red_box, blue_box = BoundingBox(10, 10, 10, 20), BoundingBox(60, 10, 10, 20)
    # the targets swapped sides while hidden, so colour and position disagree
    lost = [(1, Snapshot(1, blue_box, crop(img, red_box).copy())), (2, Snapshot(1, red_box, crop(img, blue_box).copy()))]
    dets = [Detection(5, red_box), Detection(5, blue_box)]
    scorer = default_pair_scorer()
    matches = recover_occluded(lost, dets, img, scorer)
    scores = np.array([[scorer.score(pair_feature(s, 5, d.box, crop(img, d.box))) for d in dets] for _, s in lost])
    best = max(itertools.permutations(range(2)), key=lambda p: scores[0, p[0]] + scores[1, p[1]])
    assert {(m.target_id, m.detection) for m in matches} == {(1, best[0]), (2, best[1])}
    assert {(m.target_id, m.detection) for m in matches} == {(1, 0), (2, 1)}


def test_recover_threshold_blocks_weak_matches():
    img = _scene()
    snap = Snapshot(1, BoundingBox(10, 10, 10, 20), crop(img, BoundingBox(10, 10, 10, 20)).copy())
    dets = [Detection(3, BoundingBox(60, 10, 10, 20))]
    assert recover_occluded([(1, snap)], dets, img, default_pair_scorer(), accept_threshold=0.0) == []


def test_interpolate_midpoint():
    (f, b), = interpolate_gap(BoundingBox(0, 0, 2, 2), 3, BoundingBox(2, 4, 4, 2), 5)
    assert f == 4 and b.as_tuple() == (1, 2, 3, 2)


def test_interpolate_line():
    out = interpolate_gap(BoundingBox(0, 0, 2, 2), 1, BoundingBox(4, 0, 2, 2), 5)
    assert [f for f, _ in out] == [2, 3, 4]
    assert [b.x for _, b in out] == [1, 2, 3]


def test_interpolate_adjacent_is_empty():
    assert interpolate_gap(BoundingBox(0, 0, 1, 1), 1, BoundingBox(5, 5, 1, 1), 2) == []


@given(st.tuples(*[st.floats(0, 50)] * 2, *[st.floats(1, 20)] * 2), st.tuples(*[st.floats(0, 50)] * 2, *[st.floats(1, 20)] * 2), st.integers(2, 12))
def test_interpolation_monotone(a, b, gap):
    b1, b2 = BoundingBox(*a), BoundingBox(*b)
    boxes = [b1] + [x for _, x in interpolate_gap(b1, 0, b2, gap)] + [b2]
    for k in range(4):
        vals = [x.as_tuple()[k] for x in boxes]
        diffs = np.diff(vals)
        assert np.all(diffs >= -1e-9) or np.all(diffs <= 1e-9)
