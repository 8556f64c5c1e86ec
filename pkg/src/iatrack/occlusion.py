"""Re-attach targets that lost their detections to detections nobody claimed."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .features import as_raster
from .geometry import BoundingBox, Detection, iou
from .refresh import load_weights, save_weights

HIST_BINS = 8


class PairFeature(NamedTuple):
    gap: float
    dx_norm: float
    dy_norm: float
    dh_norm: float
    iou: float
    hist_intersection: float

    def vector(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass(frozen=True, eq=False)
class PairScorer:
    weights: np.ndarray = field(repr=False)
    bias: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(PairFeature._fields),):
            raise ValueError(f"pair scorer needs {len(PairFeature._fields)} weights, got {w.shape}")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ValueError("pair scorer weights must be finite")
        object.__setattr__(self, "weights", w)

    def score(self, f: PairFeature) -> float:
        return float(self.weights @ f.vector() + self.bias)


def default_pair_scorer() -> PairScorer:
    """Hand-set margin scorer used when no trained one is supplied."""
    # colour agreement dominates, overlap helps, growth is mildly penalised
    return PairScorer(np.array([0.0, 0.0, 0.0, -0.25, 1.4, 2.5]), -1.55)


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Where and how a target last looked when a detection confirmed it."""

    frame: int
    box: BoundingBox
    patch: np.ndarray = field(repr=False)


def crop(image: np.ndarray, box: BoundingBox) -> np.ndarray:
    img = as_raster(image)
    h, w = img.shape[:2]
    x0, y0 = max(int(np.floor(box.x)), 0), max(int(np.floor(box.y)), 0)
    x1, y1 = min(int(np.ceil(box.x2)), w), min(int(np.ceil(box.y2)), h)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box.as_tuple()} has no pixels inside the {w}x{h} frame")
    return img[y0:y1, x0:x1]


def snapshot(image: np.ndarray, box: BoundingBox, frame: int) -> Snapshot:
    return Snapshot(frame, box, crop(image, box).copy())


def color_histogram(patch: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    """L1-normalised joint RGB histogram with ``bins`` levels per channel."""
    p = as_raster(patch)
    if p.size == 0:
        raise ValueError("empty patch")
    if p.shape[2] == 1:
        p = np.repeat(p, 3, axis=2)
    q = np.minimum(p[:, :, :3].astype(np.int64) * bins // 256, bins - 1)
    flat = (q[:, :, 0] * bins + q[:, :, 1]) * bins + q[:, :, 2]
    hist = np.bincount(flat.ravel(), minlength=bins**3).astype(float)
    return hist / hist.sum()


def histogram_intersection(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.minimum(a, b).sum())


def pair_feature(last: Snapshot, det_frame: int, det_box: BoundingBox, det_patch: np.ndarray) -> PairFeature:
    if det_frame <= last.frame:
        raise ValueError(f"detection frame {det_frame} does not follow the last sighting at {last.frame}")
    b1, b2 = last.box, det_box
    mean_h = 0.5 * (b1.h + b2.h)
    return PairFeature(
        gap=float(det_frame - last.frame),
        dx_norm=(b2.x - b1.x) / mean_h,
        dy_norm=(b2.y - b1.y) / mean_h,
        dh_norm=(b2.h - b1.h) / mean_h,
        iou=iou(b1, b2),
        hist_intersection=histogram_intersection(color_histogram(last.patch), color_histogram(det_patch)),
    )


def train_pair_scorer(
    features: Sequence[PairFeature],
    labels: Sequence[bool],
    reg: float = 1e-3,
    seed: int = 0,
    epochs: int = 200,
) -> PairScorer:
    """Linear max-margin scorer fit by seeded stochastic subgradient descent.

    Features are standardised, then ``reg/2 |w|^2 + mean(max(0, 1 - y (w.x + b)))``
    is minimised with step ``1 / (reg * t)`` (the bias is not shrunk) and the
    iterates of the second half are averaged. The scaling is folded back so the
    returned scorer works on raw features.
    """
    x = np.array([f.vector() if isinstance(f, PairFeature) else np.asarray(f, float) for f in features])
    y = np.where(np.asarray(labels, dtype=bool), 1.0, -1.0)
    if len(x) == 0 or np.all(y > 0) or np.all(y < 0):
        raise ValueError("pair scorer training needs both matching and non-matching pairs")
    if reg <= 0:
        raise ValueError("reg must be positive")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    z = (x - mu) / sd
    rng = np.random.default_rng(seed)
    w = np.zeros(z.shape[1])
    b = 0.0
    w_sum, b_sum, n_avg = np.zeros_like(w), 0.0, 0
    t = 0
    for epoch in range(epochs):
        for i in rng.permutation(len(z)):
            t += 1
            eta = 1.0 / (reg * (t + 10))
            active = y[i] * (z[i] @ w + b) < 1.0
            w *= 1.0 - eta * reg
            if active:
                w += eta * y[i] * z[i]
                b += eta * reg * y[i]
            if epoch >= epochs // 2:
                w_sum += w
                b_sum += b
                n_avg += 1
    w_avg, b_avg = w_sum / n_avg, b_sum / n_avg
    raw_w = w_avg / sd
    return PairScorer(raw_w, float(b_avg - raw_w @ mu))


def save_pair_scorer(path: str | Path, scorer: PairScorer) -> None:
    save_weights(path, "pair", scorer.weights, scorer.bias)


def load_pair_scorer(path: str | Path) -> PairScorer:
    kind, w, b = load_weights(path)
    if kind != "pair":
        raise ValueError(f"{path}: holds a {kind!r} model, not a pair scorer")
    return PairScorer(w, b)


def _normalised_costs(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Square, non-negative copy of ``cost`` with forbidden (non-finite) pairs priced out."""
    m, n = cost.shape
    size = max(m, n)
    allowed = np.isfinite(cost)
    finite = cost[allowed]
    lo = float(finite.min()) if finite.size else 0.0
    span = float(finite.max()) - lo if finite.size else 0.0
    # one forbidden pair costs more than any spread of allowed ones
    sentinel = (size + 1) * (span + 1.0)
    sq = np.zeros((size, size))
    sq[:m, :n] = np.where(allowed, cost - lo, sentinel)
    ok = np.zeros((size, size), dtype=bool)
    ok[:m, :n] = allowed
    return sq, ok


def _lsa_total(c: np.ndarray) -> float:
    if c.size == 0:
        return 0.0
    r, k = linear_sum_assignment(c)
    return float(c[r, k].sum())


def hungarian(cost: np.ndarray) -> list[Optional[int]]:
    """Minimum-cost one-to-one assignment; ``result[row]`` is a column or None.

    Non-finite entries mark forbidden pairs and are never returned. Among
    optimal assignments the lexicographically smallest (row by row, lowest
    column first, unassigned last) is chosen.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a matrix")
    m, n = cost.shape
    if m == 0:
        return []
    if n == 0:
        return [None] * m
    if np.any(np.isnan(cost)):
        raise ValueError("cost matrix contains NaN")
    sq, ok = _normalised_costs(cost)
    size = sq.shape[0]
    best = _lsa_total(sq)
    tol = 1e-9 * max(1.0, abs(best))
    cols = list(range(size))
    picked = [0] * size
    spent = 0.0
    for i in range(size):
        rest_rows = np.arange(i + 1, size)
        for j in cols:
            rest_cols = np.array([c for c in cols if c != j], dtype=np.int64)
            total = spent + sq[i, j] + _lsa_total(sq[np.ix_(rest_rows, rest_cols)])
            if total <= best + tol:
                picked[i] = j
                spent += sq[i, j]
                cols.remove(j)
                break
        else:  # pragma: no cover - optimum always extends
            raise AssertionError("assignment search lost the optimum")
    return [picked[i] if picked[i] < n and ok[i, picked[i]] else None for i in range(m)]


def assignment_cost(cost: np.ndarray, assignment: Sequence[Optional[int]]) -> float:
    return float(sum(cost[i, j] for i, j in enumerate(assignment) if j is not None))


class Recovery(NamedTuple):
    target_id: int
    detection: int  # index into the free detection list
    score: float


def recover_occluded(
    lost: Sequence[tuple[int, Snapshot]],
    free_dets: Sequence[Detection],
    image: np.ndarray,
    scorer: PairScorer,
    accept_threshold: float = 0.0,
) -> list[Recovery]:
    """Match lost targets to unclaimed detections of the current frame."""
    if not lost or not free_dets:
        return []
    det_patches = [crop(image, d.box) for d in free_dets]
    scores = np.empty((len(lost), len(free_dets)))
    for i, (_, snap) in enumerate(lost):
        for j, d in enumerate(free_dets):
            scores[i, j] = scorer.score(pair_feature(snap, d.frame, d.box, det_patches[j]))
    cost = np.where(scores >= accept_threshold, -scores, np.inf)
    matches = []
    for i, j in enumerate(hungarian(cost)):
        if j is not None:
            matches.append(Recovery(lost[i][0], j, float(scores[i, j])))
    return matches


def interpolate_gap(b1: BoundingBox, t1: int, b2: BoundingBox, t2: int) -> list[tuple[int, BoundingBox]]:
    """Linear (x, y, w, h) interpolation for the frames strictly between ``t1`` and ``t2``."""
    if t2 - t1 < 2:
        return []
    a = np.array(b1.as_tuple())
    b = np.array(b2.as_tuple())
    out = []
    for t in range(t1 + 1, t2):
        u = (t - t1) / (t2 - t1)
        out.append((t, BoundingBox(*((1.0 - u) * a + u * b))))
    return out
