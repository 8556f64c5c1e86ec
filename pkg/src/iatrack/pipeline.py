"""Frame loop: predict, associate, verify, refresh, re-track, recover, exit, enter."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, NamedTuple, Optional, Sequence, TextIO

import numpy as np

from .features import FeatureConfig, InvalidTrackState, as_raster
from .geometry import BoundingBox, Candidate, CandidateSource, Detection, center, iou
from .kcf import DualModel, KcfConfig, Response, track_response, train_at
from .multicut import (
    build_graph,
    extract_assignment,
    solve_heuristic,
    verify_targets,
    write_graph_dump,
)
from .occlusion import PairScorer, Snapshot, default_pair_scorer, interpolate_gap, recover_occluded, snapshot
from .refresh import (
    ModelBackup,
    RefreshClassifier,
    RefreshDecision,
    apply_refresh,
    classify,
    descriptor_length,
    refresh_descriptor,
    restore_backup,
)

log = logging.getLogger(__name__)


class Status(str, Enum):
    TRACKED = "tracked"
    UNVERIFIED = "unverified"
    EXITED = "exited"


class BoxSource(str, Enum):
    PREDICTED = "predicted"
    REFRESHED = "refreshed"
    INTERPOLATED = "interpolated"


class TrackPoint(NamedTuple):
    frame: int
    box: BoundingBox
    source: BoxSource


class Mode(str, Enum):
    FULL = "full"
    NO_REFRESH = "no_refresh"
    NO_VERIFICATION = "no_verification"
    NO_TARGET_AWARENESS = "no_target_awareness"


@dataclass(frozen=True)
class TrackerConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    kcf: KcfConfig = field(default_factory=KcfConfig)
    big_c: float = 1e6
    s_min: float = 0.1
    t_v: float = 4
    refresh_enabled: bool = True
    retrack_iou: float = 0.3
    accept_threshold: float = 0.0

    def __post_init__(self):
        if self.t_v < 0 or math.isnan(self.t_v):
            raise ValueError("t_v must be >= 0")
        if not 0.0 <= self.retrack_iou < 1.0:
            raise ValueError("retrack_iou must lie in [0, 1)")


def ablation_mode(config: TrackerConfig, mode: Mode | str) -> TrackerConfig:
    mode = Mode(mode)
    if mode is Mode.NO_REFRESH:
        return replace(config, refresh_enabled=False)
    if mode is Mode.NO_VERIFICATION:
        return replace(config, t_v=math.inf)
    if mode is Mode.NO_TARGET_AWARENESS:
        return replace(config, features=replace(config.features, id_gain=0.0))
    return config


@dataclass(frozen=True, eq=False)
class Policies:
    refresh: Optional[RefreshClassifier] = None
    pair: PairScorer = field(default_factory=default_pair_scorer)


@dataclass
class TargetState:
    id: int
    model: DualModel
    box: BoundingBox
    backup: Optional[ModelBackup] = None
    frames_unverified: int = 0
    status: Status = Status.TRACKED
    last_seen: Optional[Snapshot] = None
    trajectory: list[TrackPoint] = field(default_factory=list)

    @property
    def live(self) -> bool:
        return self.status is not Status.EXITED

    def _copy(self) -> "TargetState":
        return replace(self, trajectory=list(self.trajectory))


@dataclass
class TrackerState:
    config: TrackerConfig = field(default_factory=TrackerConfig)
    policies: Policies = field(default_factory=Policies)
    frame: int = 0
    targets: dict[int, TargetState] = field(default_factory=dict)
    next_id: int = 1

    def live_targets(self) -> list[TargetState]:
        return [t for t in self.targets.values() if t.live]


@dataclass
class FrameOutput:
    frame: int
    boxes: dict[int, TrackPoint]
    detection_owner: dict[int, int]  # detection index -> target id
    entered: list[int]
    exited: list[int]


@dataclass
class Trajectory:
    target_id: int
    points: list[TrackPoint]


class ExclusivityError(AssertionError):
    pass


# (frame, target id, descriptor, predicted box, detection box) -> decision override or None
RefreshHook = Callable[[int, int, np.ndarray, BoundingBox, BoundingBox], Optional[RefreshDecision]]


def _frame_size(image: np.ndarray) -> tuple[int, int]:
    h, w = as_raster(image).shape[:2]
    return w, h


def _inside(box: BoundingBox, size: tuple[int, int]) -> bool:
    cx, cy = center(box)
    return 0.0 <= cx < size[0] and 0.0 <= cy < size[1]


def _claim(owner: dict[int, int], det: int, tid: int) -> None:
    prev = owner.get(det)
    if prev is not None and prev != tid:
        raise ExclusivityError(f"detection {det} claimed by targets {prev} and {tid}")
    owner[det] = tid


def step(
    state: TrackerState,
    image: np.ndarray,
    detections: Sequence[Detection],
    graph_dump: Optional[TextIO] = None,
    refresh_hook: Optional[RefreshHook] = None,
) -> tuple[TrackerState, FrameOutput]:
    """Advance the tracker by one frame; ``state`` itself is never modified."""
    frame = state.frame + 1
    for d in detections:
        if d.frame != frame:
            raise ValueError(f"detection for frame {d.frame} passed to frame {frame}")
    cfg = state.config
    size = _frame_size(image)
    targets = {tid: t._copy() for tid, t in state.targets.items()}
    live = [targets[tid] for tid in sorted(targets) if targets[tid].live]
    sources: dict[int, BoxSource] = {}

    # (1) per-target prediction
    responses: dict[int, Response] = {}
    predicted: dict[int, BoundingBox] = {}
    for t in live:
        try:
            resp = track_response(t.model, image, t.box, cfg.features, cfg.kcf)
        except InvalidTrackState:
            continue
        responses[t.id] = resp
        predicted[t.id] = resp.predicted_box()[0]

    # (2) candidate pool: detections first, then predictions in target order
    candidates = [Candidate(d.box, CandidateSource.DETECTION, index=k) for k, d in enumerate(detections)]
    for tid, box in predicted.items():
        candidates.append(Candidate(box, CandidateSource.PREDICTION, origin_target=tid))
    scores = {
        (tid, j): resp.score_at(c.box)
        for tid, resp in responses.items()
        for j, c in enumerate(candidates)
    }

    # (3) association and verification
    tracked_ids = list(responses)
    g = build_graph(tracked_ids, candidates, scores, big_c=cfg.big_c, s_min=cfg.s_min)
    labels = solve_heuristic(g)
    if graph_dump is not None:
        write_graph_dump(graph_dump, g, labels, frame)
    assignment = extract_assignment(g, labels)
    owner: dict[int, int] = {}
    for tid, j in sorted(assignment.detection_of.items()):
        _claim(owner, j, tid)
    counters = {t.id: t.frames_unverified for t in live}
    _, counters, _ = verify_targets(assignment, counters, cfg.t_v)
    free = {j for j in range(len(detections)) if j not in owner}

    for t in live:
        if t.id in predicted:
            t.box = predicted[t.id]
        sources[t.id] = BoxSource.PREDICTED

    # (4) refresh verified targets
    refreshed_now: set[int] = set()
    for tid, j in sorted(assignment.detection_of.items()):
        t = targets[tid]
        det = detections[j]
        t.last_seen = snapshot(image, det.box, frame)
        if not cfg.refresh_enabled:
            continue
        if state.policies.refresh is None and refresh_hook is None:
            continue
        desc = refresh_descriptor(image, t.box, det.box, cfg.features)
        decision = None
        if refresh_hook is not None:
            decision = refresh_hook(frame, tid, desc, t.box, det.box)
        if decision is None:
            if state.policies.refresh is None:
                continue
            decision, _ = classify(state.policies.refresh, desc)
        if decision is RefreshDecision.REFRESH:
            t.model, t.backup = apply_refresh(t.model, det, decision, image, cfg.features, cfg.kcf)
            t.box = det.box
            sources[tid] = BoxSource.REFRESHED
            refreshed_now.add(tid)

    # (5) targets refreshed last frame but unpaired now: fall back and retry
    for t in live:
        if t.backup is None or t.id in refreshed_now:
            continue
        if t.backup.saved_at == frame - 1 and t.id not in assignment.detection_of:
            anchor = state.targets[t.id].box
            t.model = restore_backup(t.model, t.backup)
            t.backup = None
            try:
                resp = track_response(t.model, image, anchor, cfg.features, cfg.kcf)
            except InvalidTrackState:
                continue
            t.box = resp.predicted_box()[0]
            best: Optional[tuple[float, int]] = None
            for j in sorted(free):
                if iou(detections[j].box, t.box) <= cfg.retrack_iou:
                    continue
                s = resp.score_at(detections[j].box)
                if s >= cfg.s_min and (best is None or s > best[0]):
                    best = (s, j)
            if best is not None:
                j = best[1]
                _claim(owner, j, t.id)
                free.discard(j)
                counters[t.id] = 0
                t.last_seen = snapshot(image, detections[j].box, frame)
        elif t.backup.saved_at < frame:
            t.backup = None

    # (6) occlusion recovery over the remaining unverified targets
    lost = [(t.id, t.last_seen) for t in live if counters[t.id] > 0 and t.last_seen is not None]
    free_list = sorted(free)
    if lost and free_list:
        matches = recover_occluded(
            lost, [detections[j] for j in free_list], image, state.policies.pair, cfg.accept_threshold
        )
        for m in matches:
            t = targets[m.target_id]
            j = free_list[m.detection]
            det = detections[j]
            _claim(owner, j, t.id)
            free.discard(j)
            gap = interpolate_gap(t.last_seen.box, t.last_seen.frame, det.box, frame)
            fill = {f: b for f, b in gap}
            t.trajectory = [
                TrackPoint(p.frame, fill[p.frame], BoxSource.INTERPOLATED) if p.frame in fill else p
                for p in t.trajectory
            ]
            t.model = train_at(image, det.box, frame, cfg.features, cfg.kcf)
            t.backup = None
            t.box = det.box
            t.last_seen = snapshot(image, det.box, frame)
            counters[t.id] = 0
            sources[t.id] = BoxSource.REFRESHED

    # (7) exits
    exited = []
    for t in live:
        t.frames_unverified = counters[t.id]
        expired = t.frames_unverified > 0 and t.frames_unverified >= cfg.t_v
        if expired or t.id not in responses or not _inside(t.box, size):
            t.status = Status.EXITED
            t.backup = None
            exited.append(t.id)
        else:
            t.status = Status.TRACKED if t.frames_unverified == 0 else Status.UNVERIFIED

    # (8) enter
    next_id = state.next_id
    entered = []
    for j in sorted(free):
        det = detections[j]
        model = train_at(image, det.box, frame, cfg.features, cfg.kcf)
        t = TargetState(next_id, model, det.box, last_seen=snapshot(image, det.box, frame))
        targets[next_id] = t
        _claim(owner, j, next_id)
        sources[next_id] = BoxSource.REFRESHED
        entered.append(next_id)
        next_id += 1

    # (9) commit
    boxes: dict[int, TrackPoint] = {}
    for tid in sorted(targets):
        t = targets[tid]
        if not t.live:
            continue
        p = TrackPoint(frame, t.box, sources[tid])
        t.trajectory.append(p)
        boxes[tid] = p

    new_state = TrackerState(cfg, state.policies, frame, targets, next_id)
    return new_state, FrameOutput(frame, boxes, owner, entered, exited)


def check_refresh_policy(policies: Policies, cfg: TrackerConfig) -> None:
    if policies.refresh is None:
        return
    want = descriptor_length(cfg.features)
    if policies.refresh.weights.size != want:
        raise ValueError(
            f"refresh policy expects descriptors of length {policies.refresh.weights.size}, "
            f"features produce {want}"
        )


def group_by_frame(detections: Iterable[Detection], frame_count: int) -> list[list[Detection]]:
    per_frame: list[list[Detection]] = [[] for _ in range(frame_count)]
    for d in detections:
        if 1 <= d.frame <= frame_count:
            per_frame[d.frame - 1].append(d)
    return per_frame


def run(
    frames: Sequence[np.ndarray] | Iterable[np.ndarray],
    detections: Sequence[Detection],
    config: TrackerConfig,
    policies: Optional[Policies] = None,
    frame_count: Optional[int] = None,
    graph_dump: Optional[TextIO] = None,
    on_frame: Optional[Callable[[TrackerState, FrameOutput], None]] = None,
    refresh_hook: Optional[RefreshHook] = None,
) -> list[Trajectory]:
    """Track a whole sequence and return every trajectory that was started."""
    policies = policies or Policies()
    check_refresh_policy(policies, config)
    if frame_count is None:
        frames = list(frames)
        frame_count = len(frames)
    per_frame = group_by_frame(detections, frame_count)
    state = TrackerState(config, policies)
    for image, dets in zip(frames, per_frame):
        state, out = step(state, image, dets, graph_dump, refresh_hook)
        if on_frame is not None:
            on_frame(state, out)
    return [Trajectory(tid, list(t.trajectory)) for tid, t in sorted(state.targets.items()) if t.trajectory]
