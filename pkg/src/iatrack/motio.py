"""MOTChallenge-style text files, netpbm frames and sequence directories."""

from __future__ import annotations

import re
from pathlib import Path
from typing import Callable, Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .geometry import BoundingBox, Detection
from .synthetic import SequenceSpec, SyntheticSequence

Decoder = Callable[[Path], np.ndarray]


class FormatError(ValueError):
    def __init__(self, path: str | Path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


class TrackRecord(NamedTuple):
    frame: int
    track_id: int
    box: BoundingBox


def _fields(path: Path, lineno: int, line: str, need: int) -> list[str]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) < need:
        raise FormatError(path, lineno, f"expected at least {need} comma-separated fields, got {len(parts)}")
    return parts


def _parse_row(path: Path, lineno: int, parts: list[str]) -> tuple[int, int, BoundingBox]:
    try:
        frame = int(float(parts[0]))
        ident = int(float(parts[1]))
        x, y, w, h = (float(v) for v in parts[2:6])
    except ValueError as e:
        raise FormatError(path, lineno, f"bad number ({e})") from None
    if frame < 1:
        raise FormatError(path, lineno, f"frame index {frame} is not 1-based")
    try:
        box = BoundingBox(x, y, w, h)
    except ValueError as e:
        raise FormatError(path, lineno, str(e)) from None
    return frame, ident, box


def _lines(path: Path) -> Iterator[tuple[int, str]]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield lineno, line


def parse_detections(path: str | Path) -> list[Detection]:
    """``frame,id,x,y,w,h,conf[,...]`` lines, returned sorted by frame."""
    path = Path(path)
    out = []
    for lineno, line in _lines(path):
        parts = _fields(path, lineno, line, 7)
        frame, _, box = _parse_row(path, lineno, parts)
        try:
            conf = float(parts[6])
        except ValueError:
            raise FormatError(path, lineno, f"bad confidence {parts[6]!r}") from None
        out.append(Detection(frame, box, conf))
    out.sort(key=lambda d: d.frame)
    return out


def parse_tracks(path: str | Path) -> list[TrackRecord]:
    """Ground-truth or result lines ``frame,id,x,y,w,h[,...]``; extra columns are ignored."""
    path = Path(path)
    out = []
    for lineno, line in _lines(path):
        frame, ident, box = _parse_row(path, lineno, _fields(path, lineno, line, 6))
        out.append(TrackRecord(frame, ident, box))
    out.sort(key=lambda r: (r.frame, r.track_id))
    return out


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def format_results(records: Iterable[TrackRecord]) -> str:
    rows = sorted(records, key=lambda r: (r.frame, r.track_id))
    return "".join(
        f"{r.frame},{r.track_id},{_fmt(r.box.x)},{_fmt(r.box.y)},{_fmt(r.box.w)},{_fmt(r.box.h)},-1,-1,-1,-1\n"
        for r in rows
    )


def write_results(records: Iterable[TrackRecord], path: str | Path) -> None:
    Path(path).write_text(format_results(records))


def write_detections(dets: Iterable[Detection], path: str | Path) -> None:
    with open(path, "w") as fh:
        for d in sorted(dets, key=lambda d: d.frame):
            b = d.box
            fh.write(f"{d.frame},-1,{_fmt(b.x)},{_fmt(b.y)},{_fmt(b.w)},{_fmt(b.h)},{d.confidence:.3f}\n")


def write_ground_truth(records: Iterable[TrackRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in sorted(records, key=lambda r: (r.frame, r.track_id)):
            b = r.box
            fh.write(f"{r.frame},{r.track_id},{_fmt(b.x)},{_fmt(b.y)},{_fmt(b.w)},{_fmt(b.h)},1,1,1\n")


# ---------------------------------------------------------------------------
# netpbm
# ---------------------------------------------------------------------------

_PNM_HEADER = re.compile(rb"^(P[56])\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def write_pnm(path: str | Path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise ValueError("only 8-bit rasters can be written")
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write a raster of shape {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pnm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _PNM_HEADER.match(data)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM/PPM file")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    ch = 3 if magic == b"P6" else 1
    body = np.frombuffer(data, dtype=np.uint8, offset=m.end())
    if body.size < w * h * ch:
        raise ValueError(f"{path}: truncated pixel data")
    img = body[: w * h * ch].reshape(h, w, ch) if ch == 3 else body[: w * h].reshape(h, w)
    return img.copy()


def read_frame(path: Path, decoder: Optional[Decoder] = None) -> np.ndarray:
    if path.suffix.lower() in (".ppm", ".pgm", ".pnm"):
        return read_pnm(path)
    if decoder is None:
        raise ValueError(f"{path}: no decoder for {path.suffix!r} frames")
    return np.asarray(decoder(path))


# ---------------------------------------------------------------------------
# sequence directories: img1/NNNNNN.ppm, det/det.txt, gt/gt.txt
# ---------------------------------------------------------------------------

class SequenceDir(NamedTuple):
    spec: SequenceSpec
    frame_paths: list[Path]
    det_path: Path
    gt_path: Optional[Path]

    def frames(self, decoder: Optional[Decoder] = None) -> Iterator[np.ndarray]:
        for p in self.frame_paths:
            yield read_frame(p, decoder)


def open_sequence(root: str | Path, decoder: Optional[Decoder] = None) -> SequenceDir:
    root = Path(root)
    img_dir = root / "img1"
    if not img_dir.is_dir():
        raise FileNotFoundError(f"{img_dir}: missing frame directory")
    paths = sorted(p for p in img_dir.iterdir() if p.is_file() and p.stem.isdigit())
    if not paths:
        raise FileNotFoundError(f"{img_dir}: no frames")
    first = read_frame(paths[0], decoder)
    spec = SequenceSpec(root.name, len(paths), (first.shape[1], first.shape[0]), "directory")
    gt = root / "gt" / "gt.txt"
    return SequenceDir(spec, paths, root / "det" / "det.txt", gt if gt.exists() else None)


def save_sequence(seq: SyntheticSequence, root: str | Path) -> Path:
    root = Path(root)
    for sub in ("img1", "det", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(seq.frames, start=1):
        write_pnm(root / "img1" / f"{k:06d}.ppm", frame)
    write_detections(seq.detections, root / "det" / "det.txt")
    write_ground_truth([TrackRecord(g.frame, g.target_id, g.box) for g in seq.gt], root / "gt" / "gt.txt")
    return root


def gt_records(seq: SyntheticSequence) -> list[TrackRecord]:
    return [TrackRecord(g.frame, g.target_id, g.box) for g in seq.gt]


def trajectory_records(trajectories: Sequence) -> list[TrackRecord]:
    """Flatten pipeline trajectories into result records."""
    return [TrackRecord(p.frame, t.target_id, p.box) for t in trajectories for p in t.points]
