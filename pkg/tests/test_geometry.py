import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iatrack.geometry import BoundingBox, Candidate, CandidateSource, center, iou, iou_matrix

coords = st.floats(-100, 100, allow_nan=False)
sizes = st.floats(0.5, 50, allow_nan=False)
boxes = st.builds(BoundingBox, coords, coords, sizes, sizes)


def test_iou_identical():
    b = BoundingBox(3, 4, 5, 6)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 1, 1)) == 0.0


def test_iou_half_overlap():
    # intersection 2, union 6
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 0, 2, 2)) == pytest.approx(1 / 3)


def test_touching_edges_do_not_overlap():
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(2, 0, 2, 2)) == 0.0


@pytest.mark.parametrize("bad", [(0, 0, 0, 1), (0, 0, 1, -2), (math.nan, 0, 1, 1), (0, math.inf, 1, 1)])
def test_box_rejects_degenerate(bad):
    with pytest.raises(ValueError):
        BoundingBox(*bad)


def test_center():
    assert center(BoundingBox(0, 0, 2, 2)) == (1, 1)
    assert center(BoundingBox(10, 20, 4, 8)) == (12, 24)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou(b, a))


@given(boxes)
def test_center_inside(b):
    cx, cy = center(b)
    assert b.x <= cx <= b.x2 and b.y <= cy <= b.y2


def test_iou_matrix_matches_scalar():
    rng = np.random.default_rng(3)
    a = [BoundingBox(*rng.uniform(0, 20, 2), *rng.uniform(1, 10, 2)) for _ in range(5)]
    b = [BoundingBox(*rng.uniform(0, 20, 2), *rng.uniform(1, 10, 2)) for _ in range(4)]
    m = iou_matrix([x.as_tuple() for x in a], [x.as_tuple() for x in b])
    ref = np.array([[iou(x, y) for y in b] for x in a])
    np.testing.assert_allclose(m, ref, atol=1e-12)


def test_prediction_candidate_needs_origin():
    with pytest.raises(ValueError):
        Candidate(BoundingBox(0, 0, 1, 1), CandidateSource.PREDICTION)
    c = Candidate(BoundingBox(0, 0, 2, 4), CandidateSource.DETECTION, index=0)
    assert c.is_detection and c.location == (1, 2)
