import numpy as np
import pytest
from hypothesis import given, strategies as st

from iatrack.geometry import BoundingBox, Detection
from iatrack.motio import (
    FormatError,
    TrackRecord,
    format_results,
    open_sequence,
    parse_detections,
    parse_tracks,
    read_frame,
    read_pnm,
    save_sequence,
    write_pnm,
    write_results,
)
from iatrack.synthetic import crossing_pair, generate_synthetic


def test_parse_detection_line(tmp_path):
    p = tmp_path / "det.txt"
    p.write_text("1,-1,10,20,30,60,0.9\n")
    assert parse_detections(p) == [Detection(1, BoundingBox(10, 20, 30, 60), 0.9)]


def test_parse_sorts_frames(tmp_path):
    p = tmp_path / "det.txt"
    p.write_text("3,-1,1,1,5,5,0.5\n1,-1,2,2,5,5,0.5\n\n2,-1,3,3,5,5,0.5,-1,-1,-1\n")
    assert [d.frame for d in parse_detections(p)] == [1, 2, 3]


@pytest.mark.parametrize(
    "line,msg",
    [
        ("1,-1,10,20,0,60,0.9", "positive size"),
        ("1,-1,10,20,30", "at least 7"),
        ("0,-1,10,20,30,60,0.9", "1-based"),
        ("1,-1,10,x,30,60,0.9", "bad number"),
        ("1,-1,10,20,30,60,high", "bad confidence"),
    ],
)
def test_parse_errors_name_the_line(tmp_path, line, msg):
    p = tmp_path / "det.txt"
    p.write_text(line + "\n")
    with pytest.raises(FormatError, match=msg) as err:
        parse_detections(p)
    assert err.value.line == 1 and str(p) in str(err.value)


def test_write_results_empty(tmp_path):
    write_results([], tmp_path / "r.txt")
    assert (tmp_path / "r.txt").read_text() == ""


def test_write_results_single_line(tmp_path):
    rec = TrackRecord(4, 2, BoundingBox(1.234, 5.678, 10.0, 20.005))
    write_results([rec], tmp_path / "r.txt")
    lines = (tmp_path / "r.txt").read_text().splitlines()
    assert lines == ["4,2,1.23,5.68,10.00,20.00,-1,-1,-1,-1"] or lines == ["4,2,1.23,5.68,10.00,20.01,-1,-1,-1,-1"]
    (back,) = parse_tracks(tmp_path / "r.txt")
    assert back.frame == 4 and back.track_id == 2
    np.testing.assert_allclose(back.box.as_tuple(), rec.box.as_tuple(), atol=0.01)


def test_write_results_orders_ids():
    text = format_results([TrackRecord(1, 5, BoundingBox(0, 0, 1, 1)), TrackRecord(1, 2, BoundingBox(0, 0, 1, 1))])
    assert [ln.split(",")[1] for ln in text.splitlines()] == ["2", "5"]


def test_negative_zero_is_not_written():
    text = format_results([TrackRecord(1, 1, BoundingBox(-0.001, 0, 1, 1))])
    assert text.startswith("1,1,0.00,")


pos = st.floats(-500, 500, allow_nan=False)
size = st.floats(0.5, 300, allow_nan=False)
records = st.lists(
    st.builds(TrackRecord, st.integers(1, 50), st.integers(1, 20), st.builds(BoundingBox, pos, pos, size, size)),
    max_size=20,
    unique_by=lambda r: (r.frame, r.track_id),
)


@given(records)
def test_results_roundtrip(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("rt") / "r.txt"
    write_results(recs, path)
    back = parse_tracks(path)
    want = sorted(recs, key=lambda r: (r.frame, r.track_id))
    assert [(r.frame, r.track_id) for r in back] == [(r.frame, r.track_id) for r in want]
    for a, b in zip(back, want):
        np.testing.assert_allclose(a.box.as_tuple(), b.box.as_tuple(), atol=0.005 + 1e-9)


@pytest.mark.parametrize("shape", [(5, 7), (5, 7, 3)])
def test_pnm_roundtrip(tmp_path, shape):
    img = np.random.default_rng(0).integers(0, 256, shape, dtype=np.uint8)
    write_pnm(tmp_path / "f.ppm", img)
    np.testing.assert_array_equal(read_pnm(tmp_path / "f.ppm"), img)


def test_pnm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x01\x02")
    np.testing.assert_array_equal(read_pnm(p), [[1, 2]])


def test_pnm_rejections(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError, match="not a binary"):
        read_pnm(tmp_path / "a.pgm")
    (tmp_path / "b.pgm").write_bytes(b"P5\n2 2\n255\n\x00")
    with pytest.raises(ValueError, match="truncated"):
        read_pnm(tmp_path / "b.pgm")
    with pytest.raises(ValueError):
        write_pnm(tmp_path / "c.ppm", np.zeros((2, 2), dtype=np.float64))


def test_decoder_hook(tmp_path):
    p = tmp_path / "000001.jpg"
    p.write_bytes(b"")
    with pytest.raises(ValueError, match="no decoder"):
        read_frame(p)
    assert read_frame(p, decoder=lambda path: np.ones((2, 2), np.uint8)).sum() == 4


def test_sequence_directory_roundtrip(tmp_path):
    seq = generate_synthetic(crossing_pair(0, frames=5))
    root = save_sequence(seq, tmp_path / "cp")
    sd = open_sequence(root)
    assert sd.spec.frame_count == 5 and sd.spec.image_size == (320, 240)
    for a, b in zip(sd.frames(), seq.frames):
        np.testing.assert_array_equal(a, b)
    dets = parse_detections(sd.det_path)
    assert [d.frame for d in dets] == [d.frame for d in seq.detections]
    gt = parse_tracks(sd.gt_path)
    assert len(gt) == len(seq.gt)


def test_open_sequence_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        open_sequence(tmp_path)
