"""Editable task workflow extracted from a demonstration video.

A workflow is an ordered list of working steps over the video timeline.
Step ids are always contiguous from zero, steps never overlap, and every
successful edit bumps the revision counter so concurrent editors can
detect stale writes.  Edits are functional: they return a new workflow
and leave the input untouched.

Documents round-trip through JSON with unknown fields preserved, so
sidecar data written by other tools survives an edit cycle here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

from .association import AssociationResult
from .errors import EditError, LoadError
from .segmentation import StepSegment

_STEP_FIELDS = ("step_id", "start_frame", "end_frame", "objects", "completion_object", "note")
_WORKFLOW_FIELDS = ("workflow_id", "video_ref", "fps", "revision", "steps")


@dataclass(frozen=True)
class WorkflowStep:
    step_id: int
    start_frame: int
    end_frame: int  # inclusive
    objects: tuple[str, ...] = ()
    completion_object: Optional[str] = None
    note: Optional[str] = None
    extras: tuple[tuple[str, object], ...] = ()

    @property
    def frame_count(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class Workflow:
    workflow_id: str
    video_ref: str
    fps: float
    revision: int = 0
    steps: tuple[WorkflowStep, ...] = ()
    extras: tuple[tuple[str, object], ...] = ()

    def step(self, step_id: int) -> WorkflowStep:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise EditError(f"workflow {self.workflow_id} has no step {step_id}")


def check_workflow(workflow: Workflow) -> Workflow:
    if workflow.fps <= 0:
        raise LoadError(f"fps must be positive, got {workflow.fps}")
    if workflow.revision < 0:
        raise LoadError(f"revision must be >= 0, got {workflow.revision}")
    for position, step in enumerate(workflow.steps):
        if step.step_id != position:
            raise LoadError(
                f"step ids must be contiguous from 0; position {position} has id {step.step_id}"
            )
        if step.start_frame > step.end_frame:
            raise LoadError(f"step {step.step_id} starts after it ends")
        if step.start_frame < 0:
            raise LoadError(f"step {step.step_id} has negative start frame")
        if len(set(step.objects)) != len(step.objects):
            raise LoadError(f"step {step.step_id} lists a duplicate object")
        if step.completion_object is not None and step.completion_object not in step.objects:
            raise LoadError(
                f"step {step.step_id} completion object {step.completion_object!r} "
                "is not among its objects"
            )
    for prev, cur in zip(workflow.steps, workflow.steps[1:]):
        if cur.start_frame <= prev.end_frame:
            raise LoadError(f"steps {prev.step_id} and {cur.step_id} overlap in time")
    return workflow


def _renumber(steps: Sequence[WorkflowStep]) -> tuple[WorkflowStep, ...]:
    return tuple(replace(s, step_id=i) for i, s in enumerate(steps))


def _bump(workflow: Workflow, steps: Sequence[WorkflowStep]) -> Workflow:
    return check_workflow(
        replace(workflow, steps=_renumber(steps), revision=workflow.revision + 1)
    )


def from_segments(
    segments: Sequence[StepSegment], workflow_id: str, video_ref: str, fps: float
) -> Workflow:
    steps = tuple(
        WorkflowStep(step_id=i, start_frame=seg.start_frame, end_frame=seg.end_frame)
        for i, seg in enumerate(segments)
    )
    return check_workflow(
        Workflow(workflow_id=workflow_id, video_ref=video_ref, fps=fps, steps=steps)
    )


def from_associations(
    segments: Sequence[StepSegment],
    result: AssociationResult,
    workflow_id: str,
    video_ref: str,
    fps: float,
) -> Workflow:
    """Build a workflow whose steps carry the objects touched during them.

    Objects are ordered by when they are first touched inside the step.
    The completion object is the first object whose first touch anywhere
    in the video happens during this step: a newly handled object is the
    best available signal of what the step produces.
    """
    global_first = result.first_interactions()
    by_index = {f.frame_index: f for f in result.frames}
    steps = []
    for i, seg in enumerate(segments):
        first_in_step: dict[str, int] = {}
        new_in_step: list[str] = []
        for frame_index in range(seg.start_frame, seg.end_frame + 1):
            frame = by_index.get(frame_index)
            if frame is None:
                continue
            for assoc in frame.o_boxes:
                name = assoc.label if assoc.label is not None else f"object-{assoc.object_id}"
                if name not in first_in_step:
                    first_in_step[name] = frame_index
                    if global_first.get(assoc.object_id) == frame_index:
                        new_in_step.append(name)
        objects = tuple(sorted(first_in_step, key=lambda n: (first_in_step[n], n)))
        completion = new_in_step[0] if new_in_step else (objects[0] if objects else None)
        steps.append(
            WorkflowStep(
                step_id=i,
                start_frame=seg.start_frame,
                end_frame=seg.end_frame,
                objects=objects,
                completion_object=completion,
            )
        )
    return check_workflow(
        Workflow(workflow_id=workflow_id, video_ref=video_ref, fps=fps, steps=tuple(steps))
    )


def split_step(workflow: Workflow, step_id: int, frame: int) -> Workflow:
    """Split one step into two at ``frame`` (the first frame of the second
    half).  Both halves inherit the object list and completion object; the
    editor refines them afterwards."""
    step = workflow.step(step_id)
    if not (step.start_frame < frame <= step.end_frame):
        raise EditError(
            f"split frame {frame} must lie strictly inside step {step_id} "
            f"[{step.start_frame},{step.end_frame}]"
        )
    first = replace(step, end_frame=frame - 1)
    second = replace(step, start_frame=frame)
    steps = list(workflow.steps)
    position = steps.index(step)
    steps[position : position + 1] = [first, second]
    return _bump(workflow, steps)


def merge_steps(workflow: Workflow, step_id: int) -> Workflow:
    """Merge a step with its successor, absorbing the gap between them.

    The merged object list keeps the first step's order and appends the
    second's unseen objects; the second step's completion object wins when
    it has one, since it describes the later state.
    """
    step = workflow.step(step_id)
    position = list(workflow.steps).index(step)
    if position + 1 >= len(workflow.steps):
        raise EditError(f"step {step_id} has no successor to merge with")
    nxt = workflow.steps[position + 1]
    objects = list(step.objects) + [o for o in nxt.objects if o not in step.objects]
    merged = WorkflowStep(
        step_id=step.step_id,
        start_frame=step.start_frame,
        end_frame=nxt.end_frame,
        objects=tuple(objects),
        completion_object=nxt.completion_object or step.completion_object,
        note=step.note if nxt.note is None else (nxt.note if step.note is None else f"{step.note}; {nxt.note}"),
        extras=step.extras,
    )
    steps = list(workflow.steps)
    steps[position : position + 2] = [merged]
    return _bump(workflow, steps)


def edit_objects(
    workflow: Workflow,
    step_id: int,
    add: Sequence[str] = (),
    remove: Sequence[str] = (),
) -> Workflow:
    """Remove then add objects on one step.

    Removing the completion object clears it; adding an object the step
    already lists (or removing one it does not) is an edit error so typos
    surface instead of silently collapsing.
    """
    step = workflow.step(step_id)
    objects = list(step.objects)
    completion = step.completion_object
    for name in remove:
        if name not in objects:
            raise EditError(f"step {step_id} has no object {name!r} to remove")
        objects.remove(name)
        if completion == name:
            completion = None
    for name in add:
        if name in objects:
            raise EditError(f"step {step_id} already lists object {name!r}")
        objects.append(name)
    updated = replace(step, objects=tuple(objects), completion_object=completion)
    steps = list(workflow.steps)
    steps[steps.index(step)] = updated
    return _bump(workflow, steps)


def set_completion(workflow: Workflow, step_id: int, object_name: Optional[str]) -> Workflow:
    step = workflow.step(step_id)
    if object_name is not None and object_name not in step.objects:
        raise EditError(
            f"completion object {object_name!r} is not among step {step_id} objects"
        )
    updated = replace(step, completion_object=object_name)
    steps = list(workflow.steps)
    steps[steps.index(step)] = updated
    return _bump(workflow, steps)


def set_note(workflow: Workflow, step_id: int, note: Optional[str]) -> Workflow:
    step = workflow.step(step_id)
    steps = list(workflow.steps)
    steps[steps.index(step)] = replace(step, note=note)
    return _bump(workflow, steps)


def step_to_json(step: WorkflowStep) -> dict:
    record: dict = {
        "step_id": step.step_id,
        "start_frame": step.start_frame,
        "end_frame": step.end_frame,
        "objects": list(step.objects),
    }
    if step.completion_object is not None:
        record["completion_object"] = step.completion_object
    if step.note is not None:
        record["note"] = step.note
    record.update(dict(step.extras))
    return record


def workflow_to_json(workflow: Workflow) -> dict:
    record: dict = {
        "workflow_id": workflow.workflow_id,
        "video_ref": workflow.video_ref,
        "fps": workflow.fps,
        "revision": workflow.revision,
        "steps": [step_to_json(s) for s in workflow.steps],
    }
    record.update(dict(workflow.extras))
    return record


def _require(record: dict, key: str, context: str):
    if key not in record:
        raise LoadError(f"{context}: missing required field {key!r}")
    return record[key]


def step_from_json(record: dict, context: str = "step") -> WorkflowStep:
    if not isinstance(record, dict):
        raise LoadError(f"{context}: expected an object, got {type(record).__name__}")
    objects = _require(record, "objects", context)
    if not isinstance(objects, list) or not all(isinstance(o, str) for o in objects):
        raise LoadError(f"{context}: objects must be a list of strings")
    extras = tuple((k, v) for k, v in record.items() if k not in _STEP_FIELDS)
    try:
        return WorkflowStep(
            step_id=int(_require(record, "step_id", context)),
            start_frame=int(_require(record, "start_frame", context)),
            end_frame=int(_require(record, "end_frame", context)),
            objects=tuple(objects),
            completion_object=record.get("completion_object"),
            note=record.get("note"),
            extras=extras,
        )
    except (TypeError, ValueError) as exc:
        raise LoadError(f"{context}: {exc}") from exc


def workflow_from_json(record: dict) -> Workflow:
    if not isinstance(record, dict):
        raise LoadError(f"workflow: expected an object, got {type(record).__name__}")
    steps_json = _require(record, "steps", "workflow")
    if not isinstance(steps_json, list):
        raise LoadError("workflow: steps must be a list")
    steps = tuple(
        step_from_json(s, context=f"workflow step[{i}]") for i, s in enumerate(steps_json)
    )
    extras = tuple((k, v) for k, v in record.items() if k not in _WORKFLOW_FIELDS)
    try:
        workflow = Workflow(
            workflow_id=str(_require(record, "workflow_id", "workflow")),
            video_ref=str(_require(record, "video_ref", "workflow")),
            fps=float(_require(record, "fps", "workflow")),
            revision=int(_require(record, "revision", "workflow")),
            steps=steps,
            extras=extras,
        )
    except (TypeError, ValueError) as exc:
        raise LoadError(f"workflow: {exc}") from exc
    return check_workflow(workflow)


def loads_workflow(text: str) -> Workflow:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LoadError(f"workflow is not valid JSON: {exc}") from exc
    return workflow_from_json(record)


def dumps_workflow(workflow: Workflow) -> str:
    return json.dumps(workflow_to_json(workflow), indent=2) + "\n"


def load_workflow(path: Union[str, Path]) -> Workflow:
    return loads_workflow(Path(path).read_text())


def save_workflow(workflow: Workflow, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_workflow(workflow))
