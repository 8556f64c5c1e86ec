"""``iatrack`` command line: track, eval, sweep-tv, ablate, train, synth."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from contextlib import ExitStack
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .geometry import Detection
from .metrics import MotReport, evaluate, format_table
from .motio import (
    FormatError,
    TrackRecord,
    gt_records,
    open_sequence,
    parse_detections,
    parse_tracks,
    save_sequence,
    trajectory_records,
    write_results,
)
from .occlusion import default_pair_scorer, load_pair_scorer, save_pair_scorer
from .pipeline import Mode, Policies, TrackerConfig, run
from .refresh import load_classifier, save_classifier
from .synthetic import generate_synthetic, preset
from .training import LabeledSequence, train_policies

log = logging.getLogger("iatrack")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2

BUNDLED_REFRESH = "refresh.weights"
BUNDLED_PAIR = "pair.weights"


class InputError(Exception):
    pass


@dataclass
class LoadedSequence:
    name: str
    frames: Sequence[np.ndarray]
    frame_count: int
    detections: list[Detection]
    gt: Optional[list[TrackRecord]]


def _bundled(name: str) -> Path:
    return Path(str(resources.files("iatrack") / "data" / name))


def load_policies(cfg: RunConfig) -> Policies:
    if cfg.refresh_policy == "none":
        refresh = None
    else:
        path = _bundled(BUNDLED_REFRESH) if cfg.refresh_policy == "bundled" else Path(cfg.refresh_policy)
        if not path.is_file():
            raise InputError(f"refresh policy not found: {path}")
        refresh = load_classifier(path)
    if cfg.pair_scorer == "none":
        pair = default_pair_scorer()
    else:
        path = _bundled(BUNDLED_PAIR) if cfg.pair_scorer == "bundled" else Path(cfg.pair_scorer)
        if not path.is_file():
            raise InputError(f"pair scorer not found: {path}")
        pair = load_pair_scorer(path)
    return Policies(refresh, pair)


def _synthetic_spec(item: str, seed: int) -> tuple[str, int]:
    name, _, variant = item.partition(":")
    return name.strip(), int(variant) if variant.strip() else seed


def load_sequence(cfg: RunConfig, need_gt: bool = False) -> LoadedSequence:
    if cfg.synthetic:
        try:
            name, seed = _synthetic_spec(cfg.synthetic, cfg.seed)
            seq = generate_synthetic(preset(name, seed))
        except ValueError as e:
            raise InputError(f"synthetic input {cfg.synthetic!r}: {e}") from None
        return LoadedSequence(seq.spec.name, seq.frames, len(seq.frames), seq.detections, gt_records(seq))
    if not cfg.sequence:
        raise InputError("no input: set 'sequence' or 'synthetic' in the config")
    sd = open_sequence(cfg.sequence)
    det_path = Path(cfg.detections) if cfg.detections else sd.det_path
    if not det_path.is_file():
        raise InputError(f"detection file not found: {det_path}")
    gt_path = Path(cfg.gt) if cfg.gt else sd.gt_path
    gt = None
    if gt_path is not None and gt_path.is_file():
        gt = parse_tracks(gt_path)
    elif need_gt:
        raise InputError(f"ground truth not found: {gt_path or Path(cfg.sequence) / 'gt' / 'gt.txt'}")
    return LoadedSequence(sd.spec.name, list(sd.frames()), sd.spec.frame_count, parse_detections(det_path), gt)


def track_sequence(
    seq: LoadedSequence,
    tracker: TrackerConfig,
    policies: Policies,
    dump_dir: Optional[Path] = None,
) -> list[TrackRecord]:
    with ExitStack() as stack:
        dump = None
        if dump_dir is not None:
            dump_dir.mkdir(parents=True, exist_ok=True)
            dump = stack.enter_context(open(dump_dir / f"{seq.name}.graphs.txt", "w"))
        trajectories = run(seq.frames, seq.detections, tracker, policies, seq.frame_count, graph_dump=dump)
    return trajectory_records(trajectories)


def _evaluate(records: list[TrackRecord], seq: LoadedSequence, iou_threshold: float) -> MotReport:
    if not seq.gt:
        raise InputError(f"sequence {seq.name} has no ground truth")
    return evaluate(records, seq.gt, iou_threshold)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_track(cfg: RunConfig, dump_dir: Optional[Path] = None) -> int:
    seq = load_sequence(cfg)
    policies = load_policies(cfg)
    start = time.perf_counter()
    records = track_sequence(seq, cfg.tracker(), policies, dump_dir)
    wall = time.perf_counter() - start
    write_results(records, cfg.output)
    ids = {r.track_id for r in records}
    last = [r for r in records if r.frame == seq.frame_count]
    print(
        f"sequence={seq.name};frames={seq.frame_count};tracks={len(ids)};"
        f"live_at_end={len(last)};boxes={len(records)};wall_s={wall:.2f};output={cfg.output}"
    )
    return EXIT_OK


def cmd_eval(results: str, gt: str, iou_threshold: float) -> int:
    for p in (results, gt):
        if not Path(p).is_file():
            raise InputError(f"file not found: {p}")
    report = evaluate(parse_tracks(results), parse_tracks(gt), iou_threshold)
    print(format_table({Path(results).stem: report}))
    print(report.line())
    return EXIT_OK


def cmd_sweep_tv(cfg: RunConfig, tvs: list[float]) -> int:
    seq = load_sequence(cfg, need_gt=True)
    policies = load_policies(cfg)
    print(f"{'T_V':>5}  {'MOTA':>6}  {'FP':>5}  {'FN':>5}  {'IDS':>4}")
    for tv in tvs:
        tracker = replace(cfg.tracker(), t_v=tv)
        r = _evaluate(track_sequence(seq, tracker, policies), seq, cfg.iou_threshold)
        label = "inf" if tv == float("inf") else f"{tv:g}"
        print(f"{label:>5}  {r.mota:6.1f}  {r.fp:5d}  {r.fn:5d}  {r.ids:4d}")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig) -> int:
    seq = load_sequence(cfg, need_gt=True)
    policies = load_policies(cfg)
    rows = {}
    for mode in Mode:
        tracker = replace(cfg, mode=mode.value).tracker()
        rows[mode.value] = _evaluate(track_sequence(seq, tracker, policies), seq, cfg.iou_threshold)
    print(format_table(rows, label="mode"))
    for name, r in rows.items():
        print(f"mode={name};{r.line()}")
    return EXIT_OK


def _training_sequences(cfg: RunConfig) -> list[LabeledSequence]:
    out = []
    for item in (s.strip() for s in cfg.train_on.split(",")):
        if not item:
            continue
        if Path(item).is_dir():
            seq = load_sequence(replace(cfg, sequence=item, synthetic="", detections="", gt=""), need_gt=True)
        else:
            seq = load_sequence(replace(cfg, synthetic=item, sequence=""))
        out.append(LabeledSequence(seq.frames, seq.detections, seq.gt))
    if not out:
        raise InputError("train_on lists no sequences")
    return out


def cmd_train(cfg: RunConfig, out_dir: Path) -> int:
    sequences = _training_sequences(cfg)
    # policies are trained for the full tracker regardless of the configured mode
    tracker = replace(cfg, mode=Mode.FULL.value).tracker()
    result = train_policies(
        sequences, tracker, cfg.seed, cfg.train_margin, cfg.train_max_epochs, cfg.pair_reg
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    save_classifier(out_dir / BUNDLED_REFRESH, result.policies.refresh)
    save_pair_scorer(out_dir / BUNDLED_PAIR, result.policies.pair)
    rep = result.refresh_report
    print(
        f"refresh: episodes={result.episodes};pool={rep.pool_size};epochs={rep.epochs};"
        f"converged={str(rep.converged).lower()};mistakes_last={rep.mistakes[-1] if rep.mistakes else 0}"
    )
    print(f"pair: samples={result.pair_samples};weights={out_dir / BUNDLED_PAIR}")
    return EXIT_OK


def cmd_synth(name: str, seed: int, out_dir: Path) -> int:
    try:
        seq = generate_synthetic(preset(name, seed))
    except ValueError as e:
        raise InputError(str(e)) from None
    save_sequence(seq, out_dir)
    print(f"sequence={seq.spec.name};frames={seq.spec.frame_count};detections={len(seq.detections)};dir={out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iatrack", description="Multi-target tracker with detection verification.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", required=True, help="flat key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mode", choices=[m.value for m in Mode])
        sp.add_argument("--iou", type=float, help="evaluation IoU threshold")

    sp = sub.add_parser("track", help="track a sequence and write MOT results")
    common(sp)
    sp.add_argument("--out", help="result file (overrides 'output')")
    sp.add_argument("--tv", type=float, help="T_V override")
    sp.add_argument("--dump-graphs", metavar="DIR", help="write per-frame association graphs")
    sp.add_argument("--untrained", action="store_true", help="ignore policy files; no refresh, hand-set pair scorer")

    sp = sub.add_parser("eval", help="score a result file against ground truth")
    sp.add_argument("results")
    sp.add_argument("gt")
    sp.add_argument("--iou", type=float, default=0.5)

    sp = sub.add_parser("sweep-tv", help="MOTA/FP/FN over a list of T_V values")
    common(sp)
    sp.add_argument("--tv", help="comma-separated T_V values (default 0,1,2,4,8,20)")

    sp = sub.add_parser("ablate", help="compare the four ablation modes")
    common(sp)

    sp = sub.add_parser("train", help="fit the refresh policy and the pair scorer")
    common(sp)
    sp.add_argument("--out", default=".", help="directory for the weights files")

    sp = sub.add_parser("synth", help="write a synthetic sequence directory")
    sp.add_argument("preset")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    return p


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "eval":
        return cmd_eval(args.results, args.gt, args.iou)
    if args.command == "synth":
        return cmd_synth(args.preset, args.seed, Path(args.out))
    cfg = cfgmod.load(args.config).with_overrides(seed=args.seed, mode=args.mode, iou_threshold=args.iou)
    if args.command == "track":
        cfg = cfg.with_overrides(output=args.out, t_v=args.tv)
        if args.untrained:
            cfg = replace(cfg, refresh_policy="none", pair_scorer="none")
        return cmd_track(cfg, Path(args.dump_graphs) if args.dump_graphs else None)
    if args.command == "sweep-tv":
        return cmd_sweep_tv(cfg, cfgmod.parse_tv_list(args.tv))
    if args.command == "ablate":
        return cmd_ablate(cfg)
    if args.command == "train":
        return cmd_train(cfg, Path(args.out))
    raise AssertionError(args.command)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except (InputError, ConfigError, FormatError, FileNotFoundError, IsADirectoryError) as e:
        print(f"iatrack: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001 - last-resort report
        log.debug("internal error", exc_info=True)
        print(f"iatrack: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
