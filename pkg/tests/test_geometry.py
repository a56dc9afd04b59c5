import pytest
from hypothesis import given
from hypothesis import strategies as st

from guidekit.errors import InputError
from guidekit.geometry import (
    BoundingBox,
    check_box,
    intersection_area,
    iou,
    overlaps,
)


def boxes(max_coord=200):
    return st.builds(
        lambda x, y, w, h: BoundingBox(x, y, x + w, y + h),
        st.integers(0, max_coord),
        st.integers(0, max_coord),
        st.integers(1, 50),
        st.integers(1, 50),
    )


class TestBoundingBox:
    def test_dimensions(self):
        box = BoundingBox(10, 20, 30, 60)
        assert box.width == 20
        assert box.height == 40
        assert box.area == 800
        assert box.center == (20.0, 40.0)

    def test_shifted(self):
        box = BoundingBox(10, 20, 30, 60, label="cup")
        moved = box.shifted(5, -3)
        assert (moved.x_min, moved.y_min, moved.x_max, moved.y_max) == (15, 17, 35, 57)
        assert moved.label == "cup"

    def test_check_box_rejects_inverted(self):
        with pytest.raises(InputError):
            check_box(BoundingBox(10, 0, 5, 5))
        with pytest.raises(InputError):
            check_box(BoundingBox(0, 10, 5, 5))

    def test_check_box_rejects_bad_score(self):
        with pytest.raises(InputError):
            check_box(BoundingBox(0, 0, 5, 5, score=1.5))

    def test_check_box_accepts_plain(self):
        check_box(BoundingBox(0, 0, 5, 5, score=0.5))


class TestOverlap:
    def test_disjoint(self):
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(20, 20, 30, 30)
        assert intersection_area(a, b) == 0
        assert not overlaps(a, b)
        assert iou(a, b) == 0.0

    def test_touching_edges_do_not_overlap(self):
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(10, 0, 20, 10)
        assert intersection_area(a, b) == 0
        assert not overlaps(a, b)

    def test_partial(self):
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(5, 5, 15, 15)
        assert intersection_area(a, b) == 25
        assert overlaps(a, b)
        assert iou(a, b) == pytest.approx(25 / 175)

    def test_contained(self):
        a = BoundingBox(0, 0, 20, 20)
        b = BoundingBox(5, 5, 10, 10)
        assert intersection_area(a, b) == b.area
        assert iou(a, b) == pytest.approx(b.area / a.area)

    @given(boxes(), boxes())
    def test_symmetry(self, a, b):
        assert intersection_area(a, b) == intersection_area(b, a)
        assert iou(a, b) == iou(b, a)

    @given(boxes())
    def test_self_iou_is_one(self, box):
        assert iou(box, box) == pytest.approx(1.0)

    @given(boxes(), boxes())
    def test_iou_bounds(self, a, b):
        value = iou(a, b)
        assert 0.0 <= value <= 1.0

    @given(boxes(), boxes())
    def test_intersection_bounded_by_smaller(self, a, b):
        assert intersection_area(a, b) <= min(a.area, b.area)
