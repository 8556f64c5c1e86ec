"""Model refreshment: when to rebuild a target's filter from its detection.

The decision comes from a logistic classifier over a descriptor of the
predicted box and the assigned detection box. It is trained with a
mistake-driven protocol: the policy is replayed over recorded episodes and
only updated on the samples it gets wrong.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .features import FeatureConfig, extract_fused
from .geometry import BoundingBox, Detection, iou
from .kcf import DualModel, KcfConfig, train_at

log = logging.getLogger(__name__)

WEIGHTS_MAGIC = "IATRACK-WEIGHTS"
WEIGHTS_VERSION = 1


class RefreshDecision(str, Enum):
    REFRESH = "refresh"
    KEEP = "keep"


@dataclass(frozen=True, eq=False)
class RefreshClassifier:
    weights: np.ndarray = field(repr=False)
    bias: float = 0.0
    learning_rate: float = 0.001
    batch_size: int = 32
    iters_per_mistake: int = 5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValueError("classifier weights must be finite")

    @classmethod
    def zeros(cls, length: int, **kwargs) -> "RefreshClassifier":
        return cls(np.zeros(length), 0.0, **kwargs)


@dataclass(frozen=True, eq=False)
class RefreshSample:
    descriptor: np.ndarray
    label: RefreshDecision


@dataclass(frozen=True, eq=False)
class Episode:
    descriptor: np.ndarray
    gt_box: BoundingBox
    pred_box: BoundingBox
    det_box: BoundingBox

    @property
    def correct(self) -> RefreshDecision:
        # ties keep the current model
        better = iou(self.det_box, self.gt_box) > iou(self.pred_box, self.gt_box)
        return RefreshDecision.REFRESH if better else RefreshDecision.KEEP


@dataclass(frozen=True, eq=False)
class ModelBackup:
    previous: DualModel
    saved_at: int


@dataclass
class TrainReport:
    epochs: int
    converged: bool
    pool_size: int
    mistakes: list[int]


def descriptor_length(cfg: FeatureConfig, grid: int = 4) -> int:
    return 2 * grid * grid * cfg.channels


def _pooled(image: np.ndarray, box: BoundingBox, cfg: FeatureConfig, grid: int, oversample: int) -> np.ndarray:
    side = grid * oversample
    fm = extract_fused(image, box, replace(cfg, template_size=(side, side)), apply_hann=False)
    c = fm.channels
    return fm.data.reshape(grid, oversample, grid, oversample, c).mean(axis=(1, 3)).ravel()


def refresh_descriptor(
    image: np.ndarray,
    pred_box: BoundingBox,
    det_box: BoundingBox,
    cfg: FeatureConfig,
    grid: int = 4,
    oversample: int = 2,
) -> np.ndarray:
    """Pooled fused features inside the predicted box, then inside the detection box."""
    return np.concatenate([
        _pooled(image, pred_box, cfg, grid, oversample),
        _pooled(image, det_box, cfg, grid, oversample),
    ])


def classify(clf: RefreshClassifier, descriptor: np.ndarray) -> tuple[RefreshDecision, float]:
    x = np.asarray(descriptor, dtype=float)
    if x.shape != clf.weights.shape:
        raise ValueError(f"descriptor length {x.size} does not match classifier ({clf.weights.size})")
    score = float(expit(float(clf.weights @ x) + clf.bias))
    return (RefreshDecision.REFRESH if score > 0.5 else RefreshDecision.KEEP), score


def _sgd_step(w: np.ndarray, b: float, xs: np.ndarray, ys: np.ndarray, lr: float) -> tuple[np.ndarray, float]:
    p = expit(xs @ w + b)
    err = p - ys
    return w - lr * (err @ xs) / len(ys), b - lr * float(err.mean())


def train_policy(
    clf: RefreshClassifier,
    episodes: Sequence[Episode],
    rng_seed: int,
    max_epochs: int = 50,
) -> tuple[RefreshClassifier, TrainReport]:
    """Mistake-driven training.

    Episodes are replayed in order. Whenever the current policy picks the
    wrong action, the sample joins the pool with the correct label and the
    classifier takes ``iters_per_mistake`` logistic-loss SGD steps, each on a
    batch of the new sample plus ``batch_size - 1`` pool members drawn
    uniformly without replacement. Training stops after the first pass without
    mistakes or after ``max_epochs`` passes.
    """
    rng = np.random.default_rng(rng_seed)
    w, b = clf.weights.astype(float).copy(), float(clf.bias)
    pool_x: list[np.ndarray] = []
    pool_y: list[float] = []
    history: list[int] = []
    converged = False
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        mistakes = 0
        for ep in episodes:
            x = np.asarray(ep.descriptor, dtype=float)
            current = replace(clf, weights=w, bias=b)
            decision, _ = classify(current, x)
            target = ep.correct
            if decision is target:
                continue
            assert classify(current, x)[0] is not target
            mistakes += 1
            pool_x.append(x)
            pool_y.append(1.0 if target is RefreshDecision.REFRESH else 0.0)
            new = len(pool_x) - 1
            for _ in range(clf.iters_per_mistake):
                rest = new
                k = min(clf.batch_size - 1, rest)
                idx = rng.choice(rest, size=k, replace=False) if k > 0 else np.empty(0, dtype=np.int64)
                batch = np.concatenate([[new], idx]).astype(np.int64)
                xs = np.stack([pool_x[i] for i in batch])
                ys = np.array([pool_y[i] for i in batch])
                w, b = _sgd_step(w, b, xs, ys, clf.learning_rate)
        history.append(mistakes)
        if mistakes == 0:
            converged = True
            break
    if not converged:
        log.warning("refresh policy did not reach a mistake-free pass in %d epochs", max_epochs)
    report = TrainReport(epochs=epoch, converged=converged, pool_size=len(pool_x), mistakes=history)
    return replace(clf, weights=w, bias=b), report


def apply_refresh(
    model: DualModel,
    detection: Detection,
    decision: RefreshDecision,
    image: np.ndarray,
    cfg: FeatureConfig,
    kcfg: KcfConfig,
) -> tuple[DualModel, Optional[ModelBackup]]:
    """Retrain on the detection box when told to, keeping the old model as backup."""
    if decision is RefreshDecision.KEEP:
        return model, None
    fresh = train_at(image, detection.box, detection.frame, cfg, kcfg)
    return fresh, ModelBackup(model, detection.frame)


def restore_backup(model: DualModel, backup: Optional[ModelBackup]) -> DualModel:
    """Swap the backup back in. The caller drops the backup afterwards (single use)."""
    if backup is None:
        log.info("restore requested without a backup; keeping the current model")
        return model
    return backup.previous


# ---------------------------------------------------------------------------
# weights files (shared with the occlusion pair scorer)
# ---------------------------------------------------------------------------

def save_weights(path: str | Path, kind: str, weights: np.ndarray, bias: float) -> None:
    """Write ``magic version / kind / length / bias / one weight per line``."""
    w = np.asarray(weights, dtype=float).ravel()
    lines = [
        f"{WEIGHTS_MAGIC} {WEIGHTS_VERSION}",
        f"kind {kind}",
        f"length {w.size}",
        f"bias {float(bias)!r}",
    ]
    lines.extend(repr(float(v)) for v in w)
    Path(path).write_text("\n".join(lines) + "\n")


def load_weights(path: str | Path) -> tuple[str, np.ndarray, float]:
    text = Path(path).read_text().splitlines()
    try:
        magic, version = text[0].split()
        if magic != WEIGHTS_MAGIC or int(version) != WEIGHTS_VERSION:
            raise ValueError
        kind = text[1].split(maxsplit=1)[1]
        length = int(text[2].split()[1])
        bias = float(text[3].split()[1])
        weights = np.array([float(v) for v in text[4 : 4 + length]])
    except (ValueError, IndexError):
        raise ValueError(f"{path}: not a weights file") from None
    if weights.size != length:
        raise ValueError(f"{path}: expected {length} weights, found {weights.size}")
    return kind, weights, bias


def save_classifier(path: str | Path, clf: RefreshClassifier) -> None:
    save_weights(path, "refresh", clf.weights, clf.bias)


def load_classifier(path: str | Path, **kwargs) -> RefreshClassifier:
    kind, w, b = load_weights(path)
    if kind != "refresh":
        raise ValueError(f"{path}: holds a {kind!r} model, not a refresh policy")
    return RefreshClassifier(w, b, **kwargs)
