"""CLEAR MOT evaluation of result tracks against ground truth."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import iou
from .motio import TrackRecord
from .occlusion import hungarian

MOSTLY_TRACKED = 0.8
MOSTLY_LOST = 0.2

COLUMNS = ("mota", "motp", "mt", "ml", "fp", "fn", "ids", "frag")


@dataclass(frozen=True)
class MotReport:
    mota: float
    motp: float
    fp: int
    fn: int
    ids: int
    mt: float
    ml: float
    frag: int
    gt_total: int
    matches: int = 0

    def recomputed_mota(self) -> float:
        return mota_from_counts(self.fp, self.fn, self.ids, self.gt_total)

    def line(self) -> str:
        """Machine-readable ``metric=value;`` form."""
        d = asdict(self)
        return "".join(f"{k}={_fmt_value(d[k])};" for k in (*COLUMNS, "gt_total"))


def mota_from_counts(fp: int, fn: int, ids: int, gt_total: int) -> float:
    return 100.0 * (1.0 - (fp + fn + ids) / gt_total)


def _fmt_value(v) -> str:
    return f"{v:.1f}" if isinstance(v, float) else str(v)


def _by_frame(records: Iterable[TrackRecord]) -> dict[int, dict[int, object]]:
    out: dict[int, dict[int, object]] = defaultdict(dict)
    for r in records:
        if r.track_id in out[r.frame]:
            raise ValueError(f"track {r.track_id} appears twice in frame {r.frame}")
        out[r.frame][r.track_id] = r.box
    return out


def evaluate(
    results: Iterable[TrackRecord],
    gt: Iterable[TrackRecord],
    iou_threshold: float = 0.5,
) -> MotReport:
    """Frame-by-frame CLEAR matching.

    Pairs from the previous frame are kept while their overlap stays at or above
    ``iou_threshold``; the remaining boxes are matched by maximum total IoU.
    A ground-truth track matched to a different result id than at its previous
    match counts as an identity switch. Fragmentations count each time a
    ground-truth track goes from matched to unmatched and is matched again later.
    """
    res_f = _by_frame(results)
    gt_f = _by_frame(gt)
    gt_total = sum(len(v) for v in gt_f.values())
    if gt_total == 0:
        raise ValueError("ground truth is empty; MOTA is undefined")

    fp = fn = ids = 0
    overlap_sum = 0.0
    n_match = 0
    prev: dict[int, int] = {}  # gt id -> result id, previous frame
    last: dict[int, int] = {}  # gt id -> result id, last time matched
    history: dict[int, list[bool]] = defaultdict(list)

    for frame in sorted(set(gt_f) | set(res_f)):
        g, r = gt_f.get(frame, {}), res_f.get(frame, {})
        cur: dict[int, int] = {}
        used: set[int] = set()
        for gid in sorted(g):
            rid = prev.get(gid)
            if rid is not None and rid in r and rid not in used:
                ov = iou(g[gid], r[rid])
                if ov >= iou_threshold:
                    cur[gid] = rid
                    used.add(rid)
        g_rest = [k for k in sorted(g) if k not in cur]
        r_rest = [k for k in sorted(r) if k not in used]
        if g_rest and r_rest:
            ov = np.array([[iou(g[a], r[b]) for b in r_rest] for a in g_rest])
            cost = np.where(ov >= iou_threshold, -ov, np.inf)
            for i, j in enumerate(hungarian(cost)):
                if j is not None:
                    cur[g_rest[i]] = r_rest[j]
        for gid, rid in cur.items():
            if gid in last and last[gid] != rid:
                ids += 1
            last[gid] = rid
            overlap_sum += iou(g[gid], r[rid])
        n_match += len(cur)
        fn += len(g) - len(cur)
        fp += len(r) - len(cur)
        for gid in g:
            history[gid].append(gid in cur)
        prev = cur

    mt = ml = 0
    frag = 0
    for flags in history.values():
        ratio = sum(flags) / len(flags)
        mt += ratio >= MOSTLY_TRACKED
        ml += ratio <= MOSTLY_LOST
        frag += _interruptions(flags)
    n_gt = len(history)
    return MotReport(
        mota=mota_from_counts(fp, fn, ids, gt_total),
        motp=100.0 * overlap_sum / n_match if n_match else 0.0,
        fp=fp,
        fn=fn,
        ids=ids,
        mt=100.0 * mt / n_gt,
        ml=100.0 * ml / n_gt,
        frag=frag,
        gt_total=gt_total,
        matches=n_match,
    )


def _interruptions(flags: Sequence[bool]) -> int:
    count = 0
    gap = False
    seen = False
    for f in flags:
        if f:
            if gap:
                count += 1
            seen, gap = True, False
        elif seen:
            gap = True
    return count


def format_table(rows: Mapping[str, MotReport] | Sequence[tuple[str, MotReport]], label: str = "run") -> str:
    items = list(rows.items()) if isinstance(rows, Mapping) else list(rows)
    heads = (label, "MOTA", "MOTP", "MT", "ML", "FP", "FN", "IDS", "Frag")
    body = [
        (name, f"{r.mota:.1f}", f"{r.motp:.1f}", f"{r.mt:.1f}%", f"{r.ml:.1f}%",
         str(r.fp), str(r.fn), str(r.ids), str(r.frag))
        for name, r in items
    ]
    widths = [max(len(h), *(len(row[k]) for row in body)) if body else len(h) for k, h in enumerate(heads)]
    lines = ["  ".join(h.rjust(w) if k else h.ljust(w) for k, (h, w) in enumerate(zip(heads, widths)))]
    for row in body:
        lines.append("  ".join(c.rjust(w) if k else c.ljust(w) for k, (c, w) in enumerate(zip(row, widths))))
    return "\n".join(lines)

