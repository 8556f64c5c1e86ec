"""Fused detectability + identity feature maps.

A feature map is the channel-wise concatenation of two transforms of the same
resampled image window:

* channels ``[0, det_channels)``: detectability block, cell histograms of
  gradient orientation (shape/edge evidence, computed on grayscale);
* channels ``[det_channels, det_channels + id_channels)``: identity block,
  chroma-weighted hue histograms, L2-normalised per cell.

Either transform can be swapped for any callable with the
``transform(patch_rgb, gray, cfg) -> (H, W, k)`` signature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _accel
from .geometry import BoundingBox, center


class InvalidTrackState(ValueError):
    """A window that no longer overlaps the frame was requested."""


@dataclass(frozen=True)
class FeatureConfig:
    template_size: tuple[int, int] = (32, 16)  # (rows, cols) in cells
    cell_size: int = 4
    det_channels: int = 9
    id_channels: int = 8
    padding: float = 2.5
    det_gain: float = 1.0
    id_gain: float = 1.0
    # gradient-energy floor of the detectability normalisation, per pixel
    det_norm_eps: float = 0.05
    # pixels below this chroma do not vote in the identity block
    chroma_floor: float = 0.05
    # cells whose mean chroma vote is below this are "empty" (all-zero)
    id_empty_level: float = 0.02

    def __post_init__(self):
        if self.padding < 1:
            raise ValueError("padding must be >= 1")
        if min(self.template_size) < 1 or self.cell_size < 1:
            raise ValueError("template_size and cell_size must be positive")

    @property
    def channels(self) -> int:
        return self.det_channels + self.id_channels

    @property
    def det_slice(self) -> slice:
        return slice(0, self.det_channels)

    @property
    def id_slice(self) -> slice:
        return slice(self.det_channels, self.channels)


@dataclass(frozen=True)
class FeatureMap:
    data: np.ndarray = field(repr=False)  # (H, W, C)
    det_channels: int
    id_channels: int

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def det(self) -> np.ndarray:
        return self.data[:, :, : self.det_channels]

    @property
    def ident(self) -> np.ndarray:
        return self.data[:, :, self.det_channels :]


def hann_window(h: int, w: int) -> np.ndarray:
    """Separable raised-cosine weights, 1 at the centre and 0 at the corners."""
    return np.outer(_hann1d(h), _hann1d(w))


def _hann1d(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("window length must be >= 1")
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def search_window(box: BoundingBox, padding: float) -> BoundingBox:
    cx, cy = center(box)
    return BoundingBox.from_center(cx, cy, box.w * padding, box.h * padding)


def gradient_orientation_transform(patch: np.ndarray, gray: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    hist = _accel.orientation_cells(gray, cfg.cell_size, cfg.det_channels)
    hist /= float(cfg.cell_size * cfg.cell_size)
    norm = np.sqrt(np.sum(hist * hist, axis=2, keepdims=True) + cfg.det_norm_eps**2)
    return hist / norm


def hue_identity_transform(patch: np.ndarray, gray: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    rows, cols = cfg.template_size
    if patch.shape[2] < 3:
        return np.zeros((rows, cols, cfg.id_channels))
    hist = _accel.hue_cells(patch, cfg.cell_size, cfg.id_channels, cfg.chroma_floor)
    norm = np.sqrt(np.sum(hist * hist, axis=2, keepdims=True))
    level = np.sum(hist, axis=2, keepdims=True) / float(cfg.cell_size * cfg.cell_size)
    keep = level >= cfg.id_empty_level
    return np.where(keep, hist / np.where(norm > 0, norm, 1.0), 0.0)


Transform = Callable[[np.ndarray, np.ndarray, FeatureConfig], np.ndarray]

_LUMA = np.array([0.299, 0.587, 0.114])


def as_raster(image: np.ndarray) -> np.ndarray:
    """View a grayscale (H, W) or colour (H, W, 3) image as (H, W, C)."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image[:, :, None]
    if image.ndim != 3:
        raise ValueError(f"expected a single-frame raster, got shape {image.shape}")
    return image


def sample_window(image: np.ndarray, window: BoundingBox, out_h: int, out_w: int) -> np.ndarray:
    """Resample ``window`` of an 8-bit raster to ``out_h x out_w`` pixels in [0, 1]."""
    img = as_raster(image)
    h, w = img.shape[:2]
    if window.x2 <= 0 or window.y2 <= 0 or window.x >= w or window.y >= h:
        raise InvalidTrackState(f"window {window.as_tuple()} lies outside the {w}x{h} frame")
    sx = window.w / out_w
    sy = window.h / out_h
    patch = _accel.resample_bilinear(img, float(window.x), float(window.y), sx, sy, out_h, out_w)
    return patch / 255.0


def extract_fused(
    image: np.ndarray,
    window: BoundingBox,
    cfg: FeatureConfig,
    apply_hann: bool = True,
    det_transform: Optional[Transform] = None,
    id_transform: Optional[Transform] = None,
) -> FeatureMap:
    """Fused feature map of ``window`` resampled onto the configured cell grid.

    The window is taken as-is (callers pad it with :func:`search_window`).
    Regions outside the frame replicate the border pixels.
    """
    rows, cols = cfg.template_size
    cs = cfg.cell_size
    patch = sample_window(image, window, rows * cs, cols * cs)
    gray = patch[:, :, 0] if patch.shape[2] == 1 else patch[:, :, :3] @ _LUMA
    det = (det_transform or gradient_orientation_transform)(patch, gray, cfg)
    ident = (id_transform or hue_identity_transform)(patch, gray, cfg)
    data = np.concatenate([cfg.det_gain * det, cfg.id_gain * ident], axis=2)
    if apply_hann:
        data = data * hann_window(rows, cols)[:, :, None]
    return FeatureMap(data, cfg.det_channels, cfg.id_channels)


def extract_at(image: np.ndarray, box: BoundingBox, cfg: FeatureConfig) -> FeatureMap:
    """Windowed features over the padded search area centred on ``box``."""
    return extract_fused(image, search_window(box, cfg.padding), cfg)
