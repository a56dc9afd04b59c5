import numpy as np
import pytest

from guidekit.errors import InputError, LoadError
from guidekit.geometry import BoundingBox
from guidekit.trace import (
    DetectionFrame,
    box_from_json,
    box_to_json,
    check_contiguous,
    dumps_trace,
    load_pgm,
    load_trace,
    loads_trace,
    save_pgm,
    save_trace,
)


def make_frame(index, with_objects=False):
    hands = [BoundingBox(0, 0, 10, 10)]
    rois = [BoundingBox(20, 20, 40, 40, feature=(1.0, 0.0))]
    objects = []
    if with_objects:
        objects = [BoundingBox(20, 20, 40, 40, label="cup", score=0.9)]
    return DetectionFrame(frame_index=index, hands=hands, rois=rois, objects=objects)


class TestBoxJson:
    def test_round_trip_minimal(self):
        box = BoundingBox(1, 2, 3, 4)
        record = box_to_json(box)
        assert record == {"x_min": 1, "y_min": 2, "x_max": 3, "y_max": 4}
        assert box_from_json(record, "test") == box

    def test_round_trip_full(self):
        box = BoundingBox(1, 2, 3, 4, label="cup", score=0.5, feature=(0.6, 0.8))
        restored = box_from_json(box_to_json(box), "test")
        assert restored.label == "cup"
        assert restored.score == 0.5
        assert restored.feature == (0.6, 0.8)

    def test_missing_corner_rejected(self):
        with pytest.raises(LoadError):
            box_from_json({"x_min": 0, "y_min": 0, "x_max": 5}, "test")

    def test_inverted_rejected(self):
        with pytest.raises((LoadError, InputError)):
            box_from_json({"x_min": 5, "y_min": 0, "x_max": 0, "y_max": 5}, "test")


class TestTraceJson:
    def test_round_trip(self):
        frames = [make_frame(0, with_objects=True), make_frame(1)]
        text = dumps_trace(frames)
        restored = loads_trace(text)
        assert len(restored) == 2
        assert restored[0].objects[0].label == "cup"
        assert restored[1].rois[0].feature == (1.0, 0.0)
        assert [f.frame_index for f in restored] == [0, 1]

    def test_one_record_per_line(self):
        text = dumps_trace([make_frame(0), make_frame(1), make_frame(2)])
        lines = [line for line in text.splitlines() if line.strip()]
        assert len(lines) == 3

    def test_garbage_line_rejected(self):
        with pytest.raises(LoadError):
            loads_trace('{"frame_index": 0, "hands": [], "rois": []}\nnot json\n')

    def test_file_round_trip(self, tmp_path):
        frames = [make_frame(i) for i in range(5)]
        path = tmp_path / "trace.jsonl"
        save_trace(frames, path)
        assert load_trace(path) == frames

    def test_check_contiguous(self):
        check_contiguous([make_frame(0), make_frame(1)])
        with pytest.raises(InputError):
            check_contiguous([make_frame(1), make_frame(2)])
        with pytest.raises(InputError):
            check_contiguous([make_frame(0), make_frame(2)])


class TestPgm:
    def test_round_trip(self, tmp_path):
        mask = np.zeros((6, 8), dtype=np.uint8)
        mask[2:4, 3:6] = 1
        path = tmp_path / "mask.pgm"
        save_pgm(mask, path)
        restored = load_pgm(path)
        assert restored.shape == (6, 8)
        assert np.array_equal(restored, mask)

    def test_nonzero_becomes_one(self, tmp_path):
        mask = np.array([[0, 7], [255, 0]], dtype=np.uint8)
        path = tmp_path / "mask.pgm"
        save_pgm(mask, path)
        assert np.array_equal(load_pgm(path), np.array([[0, 1], [1, 0]]))
