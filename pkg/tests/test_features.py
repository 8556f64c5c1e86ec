import numpy as np
import pytest

from iatrack.features import (
    FeatureConfig,
    InvalidTrackState,
    extract_at,
    extract_fused,
    hann_window,
    search_window,
)
from iatrack.geometry import BoundingBox


def test_hann_single_cell():
    assert hann_window(1, 1).tolist() == [[1.0]]


def test_hann_length_five():
    np.testing.assert_allclose(hann_window(1, 5)[0], [0, 0.5, 1, 0.5, 0], atol=1e-15)


@pytest.mark.parametrize("h,w", [(4, 4), (7, 3), (32, 16)])
def test_hann_corners_zero(h, w):
    win = hann_window(h, w)
    assert win[0, 0] == win[-1, -1] == win[0, -1] == win[-1, 0] == 0.0
    assert win.max() <= 1.0 and win.min() >= 0.0


def test_constant_image_has_no_gradient_energy(feat_cfg):
    img = np.full((120, 160, 3), 90, dtype=np.uint8)
    fm = extract_fused(img, BoundingBox(20, 10, 60, 100), feat_cfg)
    assert np.all(fm.det == 0.0)


def test_gray_constant_image_is_all_zero(feat_cfg):
    img = np.full((120, 160), 200, dtype=np.uint8)
    fm = extract_fused(img, BoundingBox(20, 10, 60, 100), feat_cfg)
    assert not fm.data.any()


def test_output_shape(feat_cfg):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (90, 70, 3), dtype=np.uint8)
    fm = extract_fused(img, BoundingBox(5, 5, 40, 60), feat_cfg)
    assert fm.data.shape == (*feat_cfg.template_size, feat_cfg.det_channels + feat_cfg.id_channels)
    assert fm.det.shape[2] == 9 and fm.ident.shape[2] == 8


def test_integer_cell_shift_moves_detectability_by_one_cell():
    cfg = FeatureConfig(template_size=(8, 8), cell_size=4)
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, (80, 80, 3), dtype=np.uint8)
    a = extract_fused(img, BoundingBox(16, 16, 32, 32), cfg, apply_hann=False)
    b = extract_fused(img, BoundingBox(20, 16, 32, 32), cfg, apply_hann=False)
    # interior cells, away from the resampling border
    np.testing.assert_allclose(a.det[1:-1, 2:-1], b.det[1:-1, 1:-2], atol=1e-9)


def test_identity_block_sees_hue():
    cfg = FeatureConfig(template_size=(4, 4), cell_size=4)
    red = np.zeros((16, 16, 3), dtype=np.uint8)
    red[:, :, 0] = 200
    blue = red[:, :, ::-1].copy()
    fr = extract_fused(red, BoundingBox(0, 0, 16, 16), cfg, apply_hann=False)
    fb = extract_fused(blue, BoundingBox(0, 0, 16, 16), cfg, apply_hann=False)
    np.testing.assert_allclose(np.linalg.norm(fr.ident, axis=2), 1.0)
    assert np.argmax(fr.ident[1, 1]) != np.argmax(fb.ident[1, 1])


def test_gains_scale_blocks():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
    box = BoundingBox(0, 0, 64, 64)
    base = extract_fused(img, box, FeatureConfig(template_size=(8, 8)))
    off = extract_fused(img, box, FeatureConfig(template_size=(8, 8), id_gain=0.0, det_gain=2.0))
    assert not off.ident.any()
    np.testing.assert_allclose(off.det, 2.0 * base.det)


def test_window_outside_frame_raises(feat_cfg):
    img = np.zeros((50, 50, 3), dtype=np.uint8)
    with pytest.raises(InvalidTrackState):
        extract_fused(img, BoundingBox(60, 0, 10, 10), feat_cfg)


def test_search_window_is_padded_and_centred():
    w = search_window(BoundingBox(10, 20, 8, 16), 2.5)
    assert (w.w, w.h) == (20, 40)
    assert w.center() == (14, 28)


def test_extract_at_uses_padding(feat_cfg):
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (200, 200, 3), dtype=np.uint8)
    box = BoundingBox(80, 60, 24, 48)
    np.testing.assert_array_equal(
        extract_at(img, box, feat_cfg).data, extract_fused(img, search_window(box, 2.5), feat_cfg).data
    )


def test_bad_config():
    with pytest.raises(ValueError):
        FeatureConfig(padding=0.5)
    with pytest.raises(ValueError):
        FeatureConfig(template_size=(0, 4))
