"""Kernelized correlation filter: dual ridge regression over circular shifts.

All maps use numpy's FFT layout: index ``(0, 0)`` is the zero shift and
offsets wrap around.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .features import FeatureConfig, FeatureMap, extract_fused, search_window
from .geometry import BoundingBox, center

ArrayOrMap = Union[np.ndarray, FeatureMap]

OUT_OF_RANGE = -math.inf


@dataclass(frozen=True)
class KcfConfig:
    lam: float = 1e-4
    sigma: float = 0.5
    label_sigma_factor: float = 0.1

    def __post_init__(self):
        if self.lam <= 0 or self.sigma <= 0 or self.label_sigma_factor <= 0:
            raise ValueError("KCF parameters must be positive")


@dataclass(frozen=True, eq=False)
class DualModel:
    alpha_hat: np.ndarray = field(repr=False)
    template: FeatureMap = field(repr=False)
    trained_at: int
    target_box: BoundingBox
    sigma: float = 0.5


def _data(z: ArrayOrMap) -> np.ndarray:
    arr = z.data if isinstance(z, FeatureMap) else np.asarray(z, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def gaussian_kernel_correlation(z: ArrayOrMap, zp: ArrayOrMap, sigma: float) -> np.ndarray:
    """Gaussian kernel between ``z`` and every circular shift of ``zp``.

    ``k(u) = exp(-max(0, |z|^2 + |zp|^2 - 2 sum_x z(x) zp(x + u)) / (sigma^2 N))``
    with ``N = H * W * C``.
    """
    a, b = _data(z), _data(zp)
    if a.shape != b.shape:
        raise ValueError(f"feature maps differ in shape: {a.shape} vs {b.shape}")
    fa = np.fft.fft2(a, axes=(0, 1))
    fb = np.fft.fft2(b, axes=(0, 1))
    cross = np.real(np.fft.ifft2(np.sum(np.conj(fa) * fb, axis=2)))
    d = np.sum(a * a) + np.sum(b * b) - 2.0 * cross
    return np.exp(-np.maximum(d, 0.0) / (sigma * sigma * a.size))


def regression_labels(h: int, w: int, label_sigma: float) -> np.ndarray:
    """Gaussian target with its peak of 1 at index (0, 0), wrapping around."""
    if h < 1 or w < 1:
        raise ValueError("label map must be at least 1x1")
    di = (np.arange(h) + h // 2) % h - h // 2
    dj = (np.arange(w) + w // 2) % w - w // 2
    sq = di[:, None] ** 2 + dj[None, :] ** 2
    return np.exp(-0.5 * sq / (label_sigma * label_sigma))


def label_sigma_for(h: int, w: int, padding: float, cfg: KcfConfig) -> float:
    # target occupies roughly (h*w)/padding^2 cells of the search window
    return cfg.label_sigma_factor * math.sqrt(h * w) / padding


def train_model(
    z: FeatureMap,
    cfg: KcfConfig,
    box: BoundingBox,
    frame: int,
    padding: float = 2.5,
) -> DualModel:
    """Kernel ridge regression onto the Gaussian label map, solved per frequency."""
    if not np.all(np.isfinite(z.data)):
        raise ValueError("non-finite features")
    h, w = z.height, z.width
    y = regression_labels(h, w, label_sigma_for(h, w, padding, cfg))
    kzz = gaussian_kernel_correlation(z, z, cfg.sigma)
    alpha_hat = np.fft.fft2(y) / (np.fft.fft2(kzz) + cfg.lam)
    return DualModel(alpha_hat, z, frame, box, cfg.sigma)


def response_map(model: DualModel, z_new: FeatureMap) -> np.ndarray:
    """Filter response for every circular shift of ``z_new`` against the template."""
    if (z_new.height, z_new.width, z_new.channels) != model.template.data.shape:
        raise ValueError("feature map does not match the model template")
    k = gaussian_kernel_correlation(model.template, z_new, model.sigma)
    resp = np.fft.ifft2(np.fft.fft2(k) * model.alpha_hat)
    re = np.real(resp)
    scale = max(float(np.max(np.abs(re))), 1e-300)
    if np.max(np.abs(np.imag(resp))) > 1e-6 * scale:
        raise FloatingPointError("response map has a significant imaginary part")
    return re


def wrap_offset(idx: int, n: int) -> int:
    return (idx + n // 2) % n - n // 2


@dataclass(frozen=True, eq=False)
class Response:
    """A response map anchored on a box, with pixel <-> cell conversions."""

    values: np.ndarray = field(repr=False)
    anchor: BoundingBox
    window: BoundingBox

    @property
    def cell_w(self) -> float:
        return self.window.w / self.values.shape[1]

    @property
    def cell_h(self) -> float:
        return self.window.h / self.values.shape[0]

    def peak(self) -> tuple[int, int, float]:
        """(row offset, col offset, value) of the maximum; ties go to the lowest flat index."""
        r, c = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        h, w = self.values.shape
        return wrap_offset(int(r), h), wrap_offset(int(c), w), float(self.values[r, c])

    def predicted_box(self) -> tuple[BoundingBox, float]:
        dr, dc, val = self.peak()
        return self.anchor.shifted(dc * self.cell_w, dr * self.cell_h), val

    def cell_of(self, box: BoundingBox) -> tuple[int, int] | None:
        """Wrapped map index nearest to ``box``'s centre, or None outside the map."""
        h, w = self.values.shape
        ax, ay = center(self.anchor)
        bx, by = center(box)
        dc = math.floor((bx - ax) / self.cell_w + 0.5)
        dr = math.floor((by - ay) / self.cell_h + 0.5)
        if not (-(w // 2) <= dc <= w - w // 2 - 1 and -(h // 2) <= dr <= h - h // 2 - 1):
            return None
        return dr % h, dc % w

    def score_at(self, box: BoundingBox) -> float:
        idx = self.cell_of(box)
        if idx is None:
            return OUT_OF_RANGE
        return float(self.values[idx])


def track_response(
    model: DualModel,
    image: np.ndarray,
    anchor: BoundingBox,
    cfg: FeatureConfig,
    kcfg: KcfConfig,
) -> Response:
    window = search_window(anchor, cfg.padding)
    z = extract_fused(image, window, cfg)
    return Response(response_map(model, z), anchor, window)


def predict(
    model: DualModel,
    image: np.ndarray,
    prev_box: BoundingBox,
    cfg: FeatureConfig,
    kcfg: KcfConfig,
) -> tuple[BoundingBox, float]:
    """Translate ``prev_box`` to the response peak; the size is kept."""
    return track_response(model, image, prev_box, cfg, kcfg).predicted_box()


def score_at(
    model: DualModel,
    image: np.ndarray,
    candidate_box: BoundingBox,
    anchor_box: BoundingBox,
    cfg: FeatureConfig,
    kcfg: KcfConfig,
) -> float:
    """Response of the model at the cell nearest ``candidate_box``'s centre.

    Returns ``OUT_OF_RANGE`` (-inf) when the candidate is outside the search
    window around ``anchor_box``.
    """
    return track_response(model, image, anchor_box, cfg, kcfg).score_at(candidate_box)


def train_at(
    image: np.ndarray,
    box: BoundingBox,
    frame: int,
    cfg: FeatureConfig,
    kcfg: KcfConfig,
) -> DualModel:
    z = extract_fused(image, search_window(box, cfg.padding), cfg)
    return train_model(z, kcfg, box, frame, padding=cfg.padding)
