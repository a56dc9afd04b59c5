import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guidekit.errors import EditError, LoadError
from guidekit.segmentation import StepSegment
from guidekit.workflow import (
    Workflow,
    WorkflowStep,
    check_workflow,
    dumps_workflow,
    edit_objects,
    from_segments,
    load_workflow,
    loads_workflow,
    merge_steps,
    save_workflow,
    set_completion,
    set_note,
    split_step,
    workflow_from_json,
    workflow_to_json,
)


def make_workflow(step_specs=((0, 99), (120, 199), (230, 300))):
    steps = tuple(
        WorkflowStep(
            step_id=i,
            start_frame=start,
            end_frame=end,
            objects=("bolt", "wrench"),
            completion_object="bolt",
        )
        for i, (start, end) in enumerate(step_specs)
    )
    return check_workflow(
        Workflow(workflow_id="wf-1", video_ref="video-1", fps=30.0, revision=0, steps=steps)
    )


class TestValidation:
    def test_accepts_well_formed(self):
        make_workflow()

    def test_rejects_bad_step_ids(self):
        wf = make_workflow()
        broken = Workflow(
            workflow_id="x",
            video_ref="v",
            fps=30.0,
            revision=0,
            steps=(wf.steps[0], wf.steps[2]),
        )
        with pytest.raises(LoadError):
            check_workflow(broken)

    def test_rejects_overlapping_steps(self):
        steps = (
            WorkflowStep(0, 0, 100, ("a",), None),
            WorkflowStep(1, 90, 200, ("a",), None),
        )
        with pytest.raises(LoadError):
            check_workflow(Workflow("x", "v", 30.0, 0, steps))

    def test_rejects_completion_outside_objects(self):
        steps = (WorkflowStep(0, 0, 10, ("a",), "b"),)
        with pytest.raises(LoadError):
            check_workflow(Workflow("x", "v", 30.0, 0, steps))

    def test_rejects_nonpositive_fps(self):
        with pytest.raises(LoadError):
            check_workflow(Workflow("x", "v", 0.0, 0, ()))

    def test_unknown_step_lookup(self):
        with pytest.raises(EditError):
            make_workflow().step(17)


class TestFromSegments:
    def test_ids_and_frames_carried_over(self):
        segments = [StepSegment(10, 40, 0), StepSegment(60, 90, 1)]
        wf = from_segments(segments, "wf-2", "video-2", 25.0)
        assert wf.revision == 0
        assert [(s.step_id, s.start_frame, s.end_frame) for s in wf.steps] == [
            (0, 10, 40),
            (1, 60, 90),
        ]
        assert all(s.objects == () for s in wf.steps)


class TestSplit:
    def test_split_inside(self):
        wf = split_step(make_workflow(), 1, 150)
        assert wf.revision == 1
        assert [(s.step_id, s.start_frame, s.end_frame) for s in wf.steps] == [
            (0, 0, 99),
            (1, 120, 149),
            (2, 150, 199),
            (3, 230, 300),
        ]
        assert wf.steps[1].objects == wf.steps[2].objects == ("bolt", "wrench")
        assert wf.steps[2].completion_object == "bolt"

    def test_split_at_start_rejected(self):
        with pytest.raises(EditError):
            split_step(make_workflow(), 1, 120)

    def test_split_past_end_rejected(self):
        with pytest.raises(EditError):
            split_step(make_workflow(), 1, 200)

    def test_split_at_end_allowed(self):
        wf = split_step(make_workflow(), 1, 199)
        assert (wf.steps[1].end_frame, wf.steps[2].start_frame) == (198, 199)


class TestMerge:
    def test_merge_absorbs_gap(self):
        wf = merge_steps(make_workflow(), 0)
        assert wf.revision == 1
        assert [(s.step_id, s.start_frame, s.end_frame) for s in wf.steps] == [
            (0, 0, 199),
            (1, 230, 300),
        ]

    def test_merge_unions_objects(self):
        base = make_workflow()
        base = edit_objects(base, 1, add=["glue"], remove=["bolt"])
        merged = merge_steps(base, 0)
        assert merged.steps[0].objects == ("bolt", "wrench", "glue")

    def test_merge_takes_second_completion(self):
        base = set_completion(make_workflow(), 1, "wrench")
        merged = merge_steps(base, 0)
        assert merged.steps[0].completion_object == "wrench"

    def test_merge_last_step_rejected(self):
        with pytest.raises(EditError):
            merge_steps(make_workflow(), 2)


class TestObjectEdits:
    def test_add_and_remove(self):
        wf = edit_objects(make_workflow(), 0, add=["tape"], remove=["wrench"])
        assert wf.steps[0].objects == ("bolt", "tape")
        assert wf.revision == 1

    def test_remove_completion_clears_it(self):
        wf = edit_objects(make_workflow(), 0, remove=["bolt"])
        assert wf.steps[0].completion_object is None

    def test_duplicate_add_rejected(self):
        with pytest.raises(EditError):
            edit_objects(make_workflow(), 0, add=["bolt"])

    def test_remove_absent_rejected(self):
        with pytest.raises(EditError):
            edit_objects(make_workflow(), 0, remove=["laser"])

    def test_set_completion(self):
        wf = set_completion(make_workflow(), 0, "wrench")
        assert wf.steps[0].completion_object == "wrench"
        with pytest.raises(EditError):
            set_completion(wf, 0, "laser")

    def test_set_note(self):
        wf = set_note(make_workflow(), 2, "tighten fully")
        assert wf.steps[2].note == "tighten fully"
        assert wf.revision == 1


class TestRevisionBumps:
    def test_every_edit_bumps_once(self):
        wf = make_workflow()
        edits = [
            lambda w: split_step(w, 0, 50),
            lambda w: merge_steps(w, 0),
            lambda w: edit_objects(w, 0, add=["tape"]),
            lambda w: set_completion(w, 0, "wrench"),
            lambda w: set_note(w, 0, "x"),
        ]
        for i, edit in enumerate(edits):
            wf = edit(wf)
            assert wf.revision == i + 1


class TestJson:
    def test_round_trip(self):
        wf = set_note(make_workflow(), 1, "careful here")
        restored = loads_workflow(dumps_workflow(wf))
        assert restored == wf

    def test_unknown_fields_preserved(self):
        record = workflow_to_json(make_workflow())
        record["annotator"] = "alex"
        record["steps"][0]["confidence"] = 0.75
        restored = workflow_from_json(record)
        out = workflow_to_json(restored)
        assert out["annotator"] == "alex"
        assert out["steps"][0]["confidence"] == 0.75

    def test_unknown_fields_survive_edits(self):
        record = workflow_to_json(make_workflow())
        record["annotator"] = "alex"
        wf = workflow_from_json(record)
        edited = set_note(wf, 0, "hi")
        assert workflow_to_json(edited)["annotator"] == "alex"

    def test_missing_field_rejected(self):
        record = workflow_to_json(make_workflow())
        del record["fps"]
        with pytest.raises(LoadError):
            workflow_from_json(record)

    def test_file_round_trip(self, tmp_path):
        wf = make_workflow()
        path = tmp_path / "wf.json"
        save_workflow(wf, path)
        assert load_workflow(path) == wf
        # stored form is plain JSON
        parsed = json.loads(path.read_text())
        assert parsed["workflow_id"] == "wf-1"
        assert parsed["revision"] == 0


@st.composite
def edit_sequences(draw):
    ops = st.sampled_from(["split", "merge", "add", "remove", "note"])
    return draw(st.lists(st.tuples(ops, st.integers(0, 10**6)), max_size=12))


class TestEditProperties:
    @given(edit_sequences())
    @settings(max_examples=120, deadline=None)
    def test_edits_preserve_invariants(self, edits):
        wf = make_workflow(((0, 99), (120, 199), (230, 300), (330, 420)))
        applied = 0
        for op, pick in edits:
            if not wf.steps:
                break
            step = wf.steps[pick % len(wf.steps)]
            try:
                if op == "split":
                    span = step.frame_count
                    if span < 2:
                        continue
                    frame = step.start_frame + 1 + pick % (span - 1)
                    wf = split_step(wf, step.step_id, frame)
                elif op == "merge":
                    if step.step_id == wf.steps[-1].step_id:
                        continue
                    wf = merge_steps(wf, step.step_id)
                elif op == "add":
                    wf = edit_objects(wf, step.step_id, add=[f"obj-{pick % 5}"])
                elif op == "remove":
                    if not step.objects:
                        continue
                    wf = edit_objects(
                        wf, step.step_id, remove=[step.objects[pick % len(step.objects)]]
                    )
                else:
                    wf = set_note(wf, step.step_id, f"note {pick}")
            except EditError:
                continue
            applied += 1
            assert wf.revision == applied
            check_workflow(wf)
        # and the result still round-trips
        assert loads_workflow(dumps_workflow(wf)) == wf
