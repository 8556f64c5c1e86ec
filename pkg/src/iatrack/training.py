"""Collect supervision from sequences with ground truth and fit both policies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import BoundingBox, Detection, iou
from .motio import TrackRecord
from .occlusion import PairFeature, PairScorer, crop, pair_feature, snapshot, train_pair_scorer
from .pipeline import Policies, TrackerConfig, run
from .refresh import (
    Episode,
    RefreshClassifier,
    RefreshDecision,
    TrainReport,
    descriptor_length,
    train_policy,
)


@dataclass(frozen=True, eq=False)
class LabeledSequence:
    frames: Sequence[np.ndarray]
    detections: Sequence[Detection]
    gt: Sequence[TrackRecord]


def _gt_by_frame(gt: Sequence[TrackRecord]) -> dict[int, list[TrackRecord]]:
    out: dict[int, list[TrackRecord]] = {}
    for r in gt:
        out.setdefault(r.frame, []).append(r)
    return out


def refresh_episodes(seq: LabeledSequence, config: TrackerConfig, margin: float = 0.0) -> list[Episode]:
    """Run the tracker with teacher-forced refresh decisions and record every decision point.

    The ground-truth box of an episode is the one overlapping either the
    prediction or the detection the most; points where neither reaches 0.3 are
    skipped. Episodes whose two IoUs with the truth differ by less than
    ``margin`` are dropped from the returned list (they still steer the run).
    """
    by_frame = _gt_by_frame(seq.gt)
    episodes: list[Episode] = []

    def hook(frame: int, tid: int, desc: np.ndarray, pred: BoundingBox, det: BoundingBox) -> Optional[RefreshDecision]:
        truth = by_frame.get(frame)
        if not truth:
            return None
        best = max(truth, key=lambda r: (max(iou(r.box, det), iou(r.box, pred)), -r.track_id))
        if max(iou(best.box, det), iou(best.box, pred)) < 0.3:
            return None
        ep = Episode(desc, best.box, pred, det)
        if abs(iou(det, best.box) - iou(pred, best.box)) >= margin:
            episodes.append(ep)
        return ep.correct

    run(seq.frames, seq.detections, config, Policies(), refresh_hook=hook)
    return episodes


def pair_samples(
    seq: LabeledSequence,
    rng_seed: int,
    max_gap: int = 8,
    per_frame: int = 4,
) -> tuple[list[PairFeature], list[bool]]:
    """Random same-identity and different-identity ground-truth pairs."""
    rng = np.random.default_rng(rng_seed)
    by_frame = _gt_by_frame(seq.gt)
    frames = sorted(by_frame)
    features: list[PairFeature] = []
    labels: list[bool] = []
    for t in frames:
        now = by_frame[t]
        for _ in range(per_frame):
            gap = int(rng.integers(1, max_gap + 1))
            earlier = by_frame.get(t - gap)
            if not earlier:
                continue
            a = earlier[int(rng.integers(len(earlier)))]
            b = now[int(rng.integers(len(now)))]
            snap = snapshot(seq.frames[a.frame - 1], a.box, a.frame)
            patch = crop(seq.frames[t - 1], b.box)
            features.append(pair_feature(snap, t, b.box, patch))
            labels.append(a.track_id == b.track_id)
    return features, labels


@dataclass
class TrainingResult:
    policies: Policies
    refresh_report: TrainReport
    episodes: int
    pair_samples: int


def train_policies(
    sequences: Sequence[LabeledSequence],
    config: TrackerConfig,
    seed: int,
    margin: float = 0.2,
    max_epochs: int = 50,
    pair_reg: float = 1e-3,
) -> TrainingResult:
    episodes: list[Episode] = []
    feats: list[PairFeature] = []
    labels: list[bool] = []
    for k, seq in enumerate(sequences):
        episodes.extend(refresh_episodes(seq, config, margin))
        f, lab = pair_samples(seq, seed + k)
        feats.extend(f)
        labels.extend(lab)
    clf = RefreshClassifier.zeros(descriptor_length(config.features))
    clf, report = train_policy(clf, episodes, seed, max_epochs)
    scorer: PairScorer = train_pair_scorer(feats, labels, reg=pair_reg, seed=seed)
    return TrainingResult(Policies(clf, scorer), report, len(episodes), len(feats))
