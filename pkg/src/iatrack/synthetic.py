"""Seeded synthetic sequences: textured targets over a structured background.

Targets move along linearly interpolated waypoints ``(frame, cx, cy[, scale])``
and exist from their first to their last waypoint frame. Each target's texture
is a seeded luminance pattern tinted with a chroma offset orthogonal to the
luma axis, so two targets sharing a texture seed are indistinguishable in
grayscale and differ only in hue.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import BoundingBox, Detection

_LUMA = np.array([0.299, 0.587, 0.114])
# orthonormal basis of the plane orthogonal to the luma weights
_E1 = np.array([1.0, -1.0, 0.0]) - (np.array([1.0, -1.0, 0.0]) @ _LUMA) / (_LUMA @ _LUMA) * _LUMA
_E1 /= np.linalg.norm(_E1)
_E2 = np.cross(_LUMA, _E1)
_E2 /= np.linalg.norm(_E2)


@dataclass(frozen=True)
class SequenceSpec:
    name: str
    frame_count: int
    image_size: tuple[int, int]  # (W, H)
    frame_source: str = "synthetic"

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")


@dataclass(frozen=True)
class TargetAppearance:
    hue_deg: float
    texture_seed: int
    chroma: float = 0.22


@dataclass(frozen=True)
class SyntheticConfig:
    n_targets: int
    frame_count: int
    motion: tuple[tuple[tuple[float, ...], ...], ...]
    appearance: tuple[TargetAppearance, ...]
    image_size: tuple[int, int] = (320, 240)
    target_size: tuple[float, float] = (24.0, 48.0)  # (w, h) at scale 1
    center_jitter: float = 0.0
    size_jitter: float = 0.0
    fn_rate: float = 0.0
    fp_rate: float = 0.0
    rng_seed: int = 0
    name: str = "synthetic"
    # the detector misses targets with less than this fraction of their box visible
    min_visibility: float = 0.0

    def __post_init__(self):
        if len(self.motion) != self.n_targets or len(self.appearance) != self.n_targets:
            raise ValueError("motion and appearance need one entry per target")
        if not (0.0 <= self.fn_rate <= 1.0) or self.fp_rate < 0:
            raise ValueError("fn_rate must be in [0, 1] and fp_rate >= 0")
        if min(self.target_size) <= 0 or min(self.image_size) <= 0:
            raise ValueError("sizes must be positive")
        if self.center_jitter < 0 or self.size_jitter < 0:
            raise ValueError("jitter must be non-negative")
        if not 0.0 <= self.min_visibility <= 1.0:
            raise ValueError("min_visibility must be in [0, 1]")


@dataclass(frozen=True)
class GtBox:
    frame: int
    target_id: int
    box: BoundingBox
    visibility: float = 1.0


@dataclass
class SyntheticSequence:
    spec: SequenceSpec
    frames: list[np.ndarray] = field(repr=False)
    gt: list[GtBox] = field(repr=False)
    detections: list[Detection] = field(repr=False)


def _interp_waypoints(waypoints: Sequence[tuple[float, ...]], frame: int) -> Optional[tuple[float, float, float]]:
    first, last = waypoints[0][0], waypoints[-1][0]
    if frame < first or frame > last:
        return None
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        if a[0] <= frame <= b[0]:
            span = b[0] - a[0]
            t = 0.0 if span == 0 else (frame - a[0]) / span
            sa = a[3] if len(a) > 3 else 1.0
            sb = b[3] if len(b) > 3 else 1.0
            return (a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2]), sa + t * (sb - sa))
    wp = waypoints[0]
    return (wp[1], wp[2], wp[3] if len(wp) > 3 else 1.0)


def _clip_box(box: BoundingBox, width: int, height: int) -> Optional[BoundingBox]:
    x1, y1 = max(box.x, 0.0), max(box.y, 0.0)
    x2, y2 = min(box.x2, float(width)), min(box.y2, float(height))
    if x2 - x1 < 1.0 or y2 - y1 < 1.0:
        return None
    return BoundingBox(x1, y1, x2 - x1, y2 - y1)


def _smooth_noise(rng: np.random.Generator, h: int, w: int, grain: int) -> np.ndarray:
    coarse = rng.standard_normal((h // grain + 2, w // grain + 2))
    rows = np.minimum(np.arange(h) // grain, coarse.shape[0] - 1)
    cols = np.minimum(np.arange(w) // grain, coarse.shape[1] - 1)
    return coarse[rows][:, cols]


def _background(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    fx, fy = rng.uniform(0.02, 0.05, size=2)
    base = 0.5 + 0.08 * np.sin(2 * np.pi * fx * xx) * np.cos(2 * np.pi * fy * yy)
    base += 0.05 * _smooth_noise(rng, height, width, 16)
    base += 0.02 * rng.standard_normal((height, width))
    return np.clip(base, 0.0, 1.0)


def _texture(seed: int, h: int, w: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lum = 0.5 + 0.12 * _smooth_noise(rng, h, w, 4) + 0.04 * rng.standard_normal((h, w))
    # darker outline gives the target a distinct silhouette
    lum[:2, :] -= 0.2
    lum[-2:, :] -= 0.2
    lum[:, :2] -= 0.2
    lum[:, -2:] -= 0.2
    return np.clip(lum, 0.05, 0.95)


def _render_target(
    canvas: np.ndarray, box: BoundingBox, texture: np.ndarray, app: TargetAppearance
) -> Optional[tuple[slice, slice]]:
    height, width = canvas.shape[:2]
    x1, y1 = int(round(box.x)), int(round(box.y))
    x2, y2 = int(round(box.x2)), int(round(box.y2))
    cx1, cy1, cx2, cy2 = max(x1, 0), max(y1, 0), min(x2, width), min(y2, height)
    if cx2 <= cx1 or cy2 <= cy1:
        return None
    th, tw = texture.shape
    rows = ((np.arange(cy1, cy2) - y1) * th // max(y2 - y1, 1)).clip(0, th - 1)
    cols = ((np.arange(cx1, cx2) - x1) * tw // max(x2 - x1, 1)).clip(0, tw - 1)
    lum = texture[rows][:, cols]
    hue = np.deg2rad(app.hue_deg)
    offset = app.chroma * (np.cos(hue) * _E1 + np.sin(hue) * _E2)
    canvas[cy1:cy2, cx1:cx2, :] = lum[:, :, None] + offset[None, None, :]
    return slice(cy1, cy2), slice(cx1, cx2)


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticSequence:
    """Render frames, exact ground truth and corrupted detections.

    Everything is a pure function of ``cfg``; independent random streams are
    used for the background, the detection jitter, the false-negative drops and
    the false positives so that changing one rate leaves the others intact.
    """
    width, height = cfg.image_size
    streams = np.random.SeedSequence(cfg.rng_seed).spawn(4)
    bg_rng, jit_rng, drop_rng, fp_rng = (np.random.default_rng(s) for s in streams)
    background = _background(bg_rng, width, height)
    tw, th = cfg.target_size
    textures = [_texture(a.texture_seed, int(round(th)), int(round(tw))) for a in cfg.appearance]

    frames: list[np.ndarray] = []
    gt: list[GtBox] = []
    dets: list[Detection] = []
    for frame in range(1, cfg.frame_count + 1):
        canvas = np.repeat(background[:, :, None], 3, axis=2)
        painted_by = np.zeros((height, width), dtype=np.int32)
        placed = []
        for tid, waypoints in enumerate(cfg.motion, start=1):
            state = _interp_waypoints(waypoints, frame)
            if state is None:
                continue
            cx, cy, scale = state
            box = BoundingBox.from_center(cx, cy, tw * scale, th * scale)
            placed.append((box.y2, tid, box))
        # farther (smaller bottom edge) targets are painted first
        regions = {}
        for _, tid, box in sorted(placed, key=lambda p: (p[0], p[1])):
            region = _render_target(canvas, box, textures[tid - 1], cfg.appearance[tid - 1])
            if region is not None:
                painted_by[region] = tid
                regions[tid] = region
        visible = {tid: float(np.mean(painted_by[r] == tid)) for tid, r in regions.items()}
        frames.append(np.round(np.clip(canvas, 0.0, 1.0) * 255.0).astype(np.uint8))

        frame_gt = []
        for _, tid, box in sorted(placed, key=lambda p: p[1]):
            clipped = _clip_box(box, width, height)
            if clipped is not None:
                frame_gt.append(GtBox(frame, tid, clipped, visible.get(tid, 0.0)))
        gt.extend(frame_gt)

        for g in frame_gt:
            keep = drop_rng.random() >= cfg.fn_rate
            jx, jy = jit_rng.normal(0.0, 1.0, size=2) * cfg.center_jitter
            jw, jh = jit_rng.normal(0.0, 1.0, size=2) * cfg.size_jitter
            conf = float(np.round(jit_rng.uniform(0.6, 1.0), 3))
            if not keep or g.visibility < cfg.min_visibility:
                continue
            cx, cy = g.box.x + g.box.w / 2 + jx, g.box.y + g.box.h / 2 + jy
            w, h = max(g.box.w + jw, 2.0), max(g.box.h + jh, 2.0)
            box = _clip_box(BoundingBox.from_center(cx, cy, w, h), width, height)
            if box is not None:
                dets.append(Detection(frame, box, conf))
        for _ in range(fp_rng.poisson(cfg.fp_rate)):
            s = fp_rng.uniform(0.8, 1.2)
            w, h = tw * s, th * s
            x = fp_rng.uniform(0.0, width - w)
            y = fp_rng.uniform(0.0, height - h)
            dets.append(Detection(frame, BoundingBox(x, y, w, h), float(np.round(fp_rng.uniform(0.3, 0.8), 3))))

    spec = SequenceSpec(cfg.name, cfg.frame_count, (width, height))
    return SyntheticSequence(spec, frames, gt, dets)


# ---------------------------------------------------------------------------
# presets used by the experiments and tests
# ---------------------------------------------------------------------------

def _hues(n: int, offset: float = 0.0) -> list[float]:
    return [offset + 360.0 * k / n for k in range(n)]


def crossing_pair(seed: int = 0, frames: int = 45) -> SyntheticConfig:
    """Two same-texture targets of opposite hue meeting head-on, exact detections.

    The nearer target fully hides the other for a few frames; the detector
    reports every box that is at least half visible.
    """
    last = frames
    motion = (
        ((1, 50.0, 100.0), (last, 270.0, 112.0)),
        ((1, 270.0, 100.0), (last, 50.0, 112.0)),
    )
    appearance = (TargetAppearance(20.0, 1000 + seed), TargetAppearance(200.0, 1000 + seed))
    return SyntheticConfig(
        2, frames, motion, appearance, min_visibility=0.5, rng_seed=seed, name=f"crossing_pair-{seed}"
    )


def crossing(seed: int = 0, frames: int = 150) -> SyntheticConfig:
    """Four targets in two crossing pairs with scale change and a noisy detector."""
    f = frames
    motion = (
        ((1, 40.0, 70.0, 0.8), (f, 280.0, 90.0, 1.3)),
        ((1, 280.0, 95.0, 0.8), (f, 40.0, 80.0, 1.3)),
        ((1, 60.0, 175.0, 1.2), (f, 260.0, 160.0, 0.8)),
        ((1, 260.0, 150.0, 1.2), (f, 70.0, 180.0, 0.8)),
    )
    appearance = tuple(TargetAppearance(h, 2000 + 17 * seed + k) for k, h in enumerate(_hues(4, 15.0)))
    return SyntheticConfig(
        4, frames, motion, appearance,
        center_jitter=1.0, size_jitter=1.0, fn_rate=0.1, fp_rate=0.1,
        rng_seed=seed, name=f"crossing-{seed}",
    )


def verification_sweep(seed: int = 0, frames: int = 200) -> SyntheticConfig:
    """Five targets, crossings, fn_rate 0.2 and 0.2 false positives per frame."""
    f = frames
    motion = (
        ((1, 40.0, 60.0), (f // 2, 160.0, 80.0), (f, 280.0, 60.0)),
        ((1, 280.0, 80.0), (f, 40.0, 70.0)),
        ((1, 50.0, 180.0, 0.9), (f, 270.0, 165.0, 1.2)),
        ((1, 270.0, 170.0, 1.1), (f, 60.0, 185.0, 0.9)),
        ((1, 160.0, 120.0), (f // 2, 200.0, 130.0), (f, 150.0, 120.0)),
    )
    appearance = tuple(TargetAppearance(h, 3000 + 31 * seed + k) for k, h in enumerate(_hues(5, 10.0)))
    return SyntheticConfig(
        5, frames, motion, appearance,
        center_jitter=1.0, size_jitter=1.0, fn_rate=0.2, fp_rate=0.2,
        rng_seed=seed, name=f"verification_sweep-{seed}",
    )


def refresh_training(seed: int = 0, frames: int = 120) -> SyntheticConfig:
    """Scale-changing targets and a jittery detector, for learning the refresh policy."""
    f = frames
    motion = (
        ((1, 50.0, 70.0, 0.8), (f, 270.0, 80.0, 1.4)),
        ((1, 270.0, 175.0, 1.3), (f, 60.0, 165.0, 0.8)),
        ((1, 160.0, 60.0, 1.0), (f, 170.0, 180.0, 1.0)),
    )
    appearance = tuple(TargetAppearance(h, 4000 + 13 * seed + k) for k, h in enumerate(_hues(3, 40.0)))
    return SyntheticConfig(
        3, frames, motion, appearance,
        center_jitter=3.0, size_jitter=3.0, fn_rate=0.05, fp_rate=0.0,
        rng_seed=seed, name=f"refresh_training-{seed}",
    )


PRESETS = {
    "crossing_pair": crossing_pair,
    "crossing": crossing,
    "verification_sweep": verification_sweep,
    "refresh_training": refresh_training,
}


def preset(name: str, seed: int = 0) -> SyntheticConfig:
    try:
        return PRESETS[name](seed)
    except KeyError:
        raise ValueError(f"unknown synthetic preset {name!r}; choose from {sorted(PRESETS)}") from None
