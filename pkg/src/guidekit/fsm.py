"""Task models: finite state machines over detector output.

A task model describes the user's progress through a physical task as
states with spoken/displayed guidance, connected by transitions whose
predicates test what the object detector currently sees.  Predicates are
boolean trees over counting atoms ("at least N boxes of class C with
score >= S").  Negation is allowed only directly on atoms: error states
are expressed as "saw the wrong object", and keeping NOT at the leaves
makes every predicate's meaning auditable state by state.

The module also scaffolds a first-draft linear model from an edited
workflow, which the author then refines by hand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import LoadError, ScaffoldError
from .geometry import BoundingBox
from .workflow import Workflow

DEFAULT_DEBOUNCE = 3

START = "start"
NORMAL = "normal"
ERROR = "error"
DONE = "done"
STATE_KINDS = (START, NORMAL, ERROR, DONE)

ATOM = "atom"
AND = "and"
OR = "or"
NOT = "not"


@dataclass(frozen=True)
class Predicate:
    """Node of a predicate tree.

    ``atom`` nodes carry class_name/min_count/min_score; ``and``/``or``
    nodes carry children; ``not`` carries exactly one atom child.
    """

    op: str
    class_name: Optional[str] = None
    min_count: int = 1
    min_score: float = 0.0
    children: tuple["Predicate", ...] = ()


def atom(class_name: str, min_count: int = 1, min_score: float = 0.0) -> Predicate:
    return Predicate(op=ATOM, class_name=class_name, min_count=min_count, min_score=min_score)


def p_and(*children: Predicate) -> Predicate:
    return Predicate(op=AND, children=children)


def p_or(*children: Predicate) -> Predicate:
    return Predicate(op=OR, children=children)


def p_not(child: Predicate) -> Predicate:
    return Predicate(op=NOT, children=(child,))


def evaluate(predicate: Predicate, detections: Sequence[BoundingBox]) -> bool:
    if predicate.op == ATOM:
        count = sum(
            1
            for box in detections
            if box.label == predicate.class_name
            and (box.score is None or box.score >= predicate.min_score)
        )
        return count >= predicate.min_count
    if predicate.op == AND:
        return all(evaluate(c, detections) for c in predicate.children)
    if predicate.op == OR:
        return any(evaluate(c, detections) for c in predicate.children)
    if predicate.op == NOT:
        return not evaluate(predicate.children[0], detections)
    raise LoadError(f"unknown predicate op {predicate.op!r}")


@dataclass(frozen=True)
class Transition:
    to_state: str
    priority: int
    predicate: Predicate


@dataclass(frozen=True)
class FsmState:
    name: str
    kind: str
    guidance: str
    transitions: tuple[Transition, ...] = ()


@dataclass(frozen=True)
class TaskFsm:
    task_name: str
    states: tuple[FsmState, ...]
    detector_classes: tuple[str, ...] = ()
    debounce: int = DEFAULT_DEBOUNCE

    def state(self, name: str) -> FsmState:
        for s in self.states:
            if s.name == name:
                return s
        raise LoadError(f"task model has no state {name!r}")

    @property
    def start_state(self) -> str:
        for s in self.states:
            if s.kind == START:
                return s.name
        raise LoadError("task model has no start state")


# -- validation ----------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    message: str
    state: Optional[str] = None

    def __str__(self) -> str:
        where = f" [{self.state}]" if self.state else ""
        return f"{self.level}{where}: {self.message}"


def _check_predicate(pred: Predicate, classes: set[str], state: str, out: list[Diagnostic]):
    if pred.op == ATOM:
        if not pred.class_name:
            out.append(Diagnostic("error", "atom with empty class name", state))
        elif classes and pred.class_name not in classes:
            out.append(
                Diagnostic(
                    "error",
                    f"atom references unknown detector class {pred.class_name!r}",
                    state,
                )
            )
        if pred.min_count < 1:
            out.append(Diagnostic("error", f"atom min_count must be >= 1, got {pred.min_count}", state))
        if not (0.0 <= pred.min_score <= 1.0):
            out.append(Diagnostic("error", f"atom min_score must be in [0, 1], got {pred.min_score}", state))
        if pred.children:
            out.append(Diagnostic("error", "atom must not have children", state))
        return
    if pred.op == NOT:
        if len(pred.children) != 1:
            out.append(Diagnostic("error", "not takes exactly one child", state))
        elif pred.children[0].op != ATOM:
            out.append(
                Diagnostic(
                    "error",
                    "not may only negate an atom; push negations to the leaves",
                    state,
                )
            )
        else:
            _check_predicate(pred.children[0], classes, state, out)
        return
    if pred.op in (AND, OR):
        if not pred.children:
            out.append(Diagnostic("error", f"{pred.op} needs at least one child", state))
        for child in pred.children:
            _check_predicate(child, classes, state, out)
        return
    out.append(Diagnostic("error", f"unknown predicate op {pred.op!r}", state))


def validate_fsm(fsm: TaskFsm) -> list[Diagnostic]:
    """All structural problems at once, so an editor can show them inline."""
    out: list[Diagnostic] = []
    names = [s.name for s in fsm.states]
    if len(set(names)) != len(names):
        out.append(Diagnostic("error", "state names must be unique"))
    if any(not n for n in names):
        out.append(Diagnostic("error", "state names must be non-empty"))
    starts = [s for s in fsm.states if s.kind == START]
    dones = [s for s in fsm.states if s.kind == DONE]
    if len(starts) != 1:
        out.append(Diagnostic("error", f"need exactly one start state, found {len(starts)}"))
    if not dones:
        out.append(Diagnostic("error", "need at least one done state"))
    if fsm.debounce < 1:
        out.append(Diagnostic("error", f"debounce must be >= 1, got {fsm.debounce}"))
    classes = set(fsm.detector_classes)
    known = set(names)
    for state in fsm.states:
        if state.kind not in STATE_KINDS:
            out.append(Diagnostic("error", f"unknown state kind {state.kind!r}", state.name))
        priorities = [t.priority for t in state.transitions]
        if len(set(priorities)) != len(priorities):
            out.append(Diagnostic("error", "transition priorities must be unique", state.name))
        if state.kind == DONE and state.transitions:
            out.append(Diagnostic("error", "done states are terminal and take no transitions", state.name))
        if state.kind != DONE and not state.transitions:
            out.append(Diagnostic("warning", "state has no outgoing transitions", state.name))
        for transition in state.transitions:
            if transition.to_state not in known:
                out.append(
                    Diagnostic(
                        "error",
                        f"transition targets unknown state {transition.to_state!r}",
                        state.name,
                    )
                )
            _check_predicate(transition.predicate, classes, state.name, out)
    if starts and len(starts) == 1:
        reachable = {starts[0].name}
        frontier = [starts[0].name]
        by_name = {s.name: s for s in fsm.states}
        while frontier:
            state = by_name.get(frontier.pop())
            if state is None:
                continue
            for transition in state.transitions:
                if transition.to_state in by_name and transition.to_state not in reachable:
                    reachable.add(transition.to_state)
                    frontier.append(transition.to_state)
        for name in names:
            if name not in reachable:
                out.append(Diagnostic("warning", "state is unreachable from start", name))
    return out


def errors_of(diagnostics: Sequence[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diagnostics if d.level == "error"]


# -- scaffolding ---------------------------------------------------------


def scaffold_from_workflow(
    workflow: Workflow, task_name: Optional[str] = None, debounce: int = DEFAULT_DEBOUNCE
) -> TaskFsm:
    """First-draft linear task model from an edited workflow.

    One state per step plus a terminal done state; each step advances
    when its completion object appears.  Guidance strings are plain
    placeholders for the author to rewrite.
    """
    if not workflow.steps:
        raise ScaffoldError("workflow has no steps to scaffold from")
    for step in workflow.steps:
        if not step.completion_object:
            raise ScaffoldError(
                f"step {step.step_id} has no completion object; set one before scaffolding"
            )
    classes = sorted(
        {o for s in workflow.steps for o in s.objects}
        | {s.completion_object for s in workflow.steps if s.completion_object}
    )
    states = []
    for i, step in enumerate(workflow.steps):
        name = "start" if i == 0 else f"step-{i}"
        target = "done" if i + 1 == len(workflow.steps) else f"step-{i + 1}"
        states.append(
            FsmState(
                name=name,
                kind=START if i == 0 else NORMAL,
                guidance=f"Proceed to step {i}",
                transitions=(
                    Transition(
                        to_state=target,
                        priority=10,
                        predicate=atom(step.completion_object),
                    ),
                ),
            )
        )
    states.append(FsmState(name="done", kind=DONE, guidance="Task complete"))
    return TaskFsm(
        task_name=task_name or workflow.workflow_id,
        states=tuple(states),
        detector_classes=tuple(classes),
        debounce=debounce,
    )


# -- JSON ----------------------------------------------------------------


def predicate_to_json(pred: Predicate) -> dict:
    if pred.op == ATOM:
        return {
            "op": ATOM,
            "class_name": pred.class_name,
            "min_count": pred.min_count,
            "min_score": pred.min_score,
        }
    return {"op": pred.op, "children": [predicate_to_json(c) for c in pred.children]}


def predicate_from_json(record: dict, context: str = "predicate") -> Predicate:
    if not isinstance(record, dict):
        raise LoadError(f"{context}: expected an object")
    op = record.get("op")
    if op == ATOM:
        try:
            return Predicate(
                op=ATOM,
                class_name=str(record["class_name"]),
                min_count=int(record.get("min_count", 1)),
                min_score=float(record.get("min_score", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"{context}: bad atom: {exc}") from exc
    if op in (AND, OR, NOT):
        children = record.get("children")
        if not isinstance(children, list):
            raise LoadError(f"{context}: {op} needs a children list")
        return Predicate(
            op=op,
            children=tuple(
                predicate_from_json(c, f"{context}.children[{i}]") for i, c in enumerate(children)
            ),
        )
    raise LoadError(f"{context}: unknown op {op!r}")


def fsm_to_json(fsm: TaskFsm) -> dict:
    return {
        "task_name": fsm.task_name,
        "debounce": fsm.debounce,
        "detector_classes": list(fsm.detector_classes),
        "states": [
            {
                "name": s.name,
                "kind": s.kind,
                "guidance": s.guidance,
                "transitions": [
                    {
                        "to": t.to_state,
                        "priority": t.priority,
                        "predicate": predicate_to_json(t.predicate),
                    }
                    for t in s.transitions
                ],
            }
            for s in fsm.states
        ],
    }


def fsm_from_json(record: dict) -> TaskFsm:
    if not isinstance(record, dict):
        raise LoadError("task model: expected an object")
    states_json = record.get("states")
    if not isinstance(states_json, list):
        raise LoadError("task model: states must be a list")
    states = []
    try:
        for i, state_json in enumerate(states_json):
            transitions = tuple(
                Transition(
                    to_state=str(t["to"]),
                    priority=int(t["priority"]),
                    predicate=predicate_from_json(
                        t["predicate"], f"state[{i}].transitions[{j}].predicate"
                    ),
                )
                for j, t in enumerate(state_json.get("transitions", []))
            )
            states.append(
                FsmState(
                    name=str(state_json["name"]),
                    kind=str(state_json["kind"]),
                    guidance=str(state_json.get("guidance", "")),
                    transitions=transitions,
                )
            )
        return TaskFsm(
            task_name=str(record["task_name"]),
            states=tuple(states),
            detector_classes=tuple(str(c) for c in record.get("detector_classes", [])),
            debounce=int(record.get("debounce", DEFAULT_DEBOUNCE)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"task model: {exc}") from exc


def load_fsm(path: Union[str, Path]) -> TaskFsm:
    try:
        record = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"task model is not valid JSON: {exc}") from exc
    return fsm_from_json(record)


def save_fsm(fsm: TaskFsm, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(fsm_to_json(fsm), indent=2) + "\n")
