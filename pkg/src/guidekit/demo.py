"""Deterministic sample data for demos, docs, and the test suite.

Three generators:

* a long assembly-style detection trace with six interaction bursts,
  noise spikes in the idle gaps, and short detector dropouts inside the
  bursts, together with its reference step list;
* a sandwich-making task model with detection timelines for a correct
  run and two error-and-recovery runs;
* a tiny synthetic video of a textured square translating over a flat
  background, with ground-truth boxes.

Everything is seeded and pure, so outputs are identical across runs.
"""

from __future__ import annotations

import numpy as np

from .fsm import (
    DONE,
    ERROR,
    NORMAL,
    START,
    FsmState,
    TaskFsm,
    Transition,
    atom,
    p_and,
    p_not,
)
from .geometry import BoundingBox
from .segmentation import StepSegment
from .trace import DetectionFrame

ASSEMBLY_PARTS = ("part-a", "part-b", "part-c", "part-d", "part-e", "part-f")

# (start, end inclusive, pre-start reach-in frames)
_BURSTS = (
    (60, 219, 0),
    (280, 459, 12),
    (520, 639, 6),
    (700, 899, 12),
    (960, 1109, 6),
    (1170, 1339, 12),
)
_DROPS = ((135, 137), (795, 797))  # hand briefly lost inside a burst
_SPIKES = (30, 245, 488, 665, 925, 1138, 1420)  # stray one-frame touches
_TRACE_FRAMES = 1500

_PARKED_HAND = BoundingBox(x_min=560, y_min=60, x_max=610, y_max=110)


def _part_box(part_index: int, label: str | None = None, feature=None) -> BoundingBox:
    x = 40 + 90 * part_index
    return BoundingBox(
        x_min=x, y_min=300, x_max=x + 40, y_max=340, label=label, feature=feature
    )


def _part_feature(part_index: int) -> tuple[float, ...]:
    one_hot = [0.0] * 8
    one_hot[part_index] = 1.0
    return tuple(one_hot)


def _hand_at(part_index: int) -> BoundingBox:
    home = _part_box(part_index)
    return BoundingBox(
        x_min=home.x_min + 10,
        y_min=home.y_min - 10,
        x_max=home.x_min + 60,
        y_max=home.y_min + 40,
    )


def assembly_trace() -> tuple[list[DetectionFrame], list[StepSegment]]:
    """Six-step assembly recording plus its reference step boundaries.

    The hand reaches for some parts a few frames before the annotated
    step begins, dropouts interrupt two bursts for three frames, and a
    handful of single-frame touches land in the idle gaps; a usable
    boundary detector has to shrug all of that off.
    """
    touching: dict[int, int] = {}
    for part_index, (start, end, reach) in enumerate(_BURSTS):
        for frame in range(start - reach, end + 1):
            touching[frame] = part_index
    for start, end in _DROPS:
        for frame in range(start, end + 1):
            touching.pop(frame, None)
    for spike_index, frame in enumerate(_SPIKES):
        touching[frame] = min(spike_index + 1, len(ASSEMBLY_PARTS) - 1)

    part_rois = [
        _part_box(i, feature=_part_feature(i)) for i in range(len(ASSEMBLY_PARTS))
    ]
    seeds = [
        _part_box(i, label=ASSEMBLY_PARTS[i], feature=_part_feature(i))
        for i in range(len(ASSEMBLY_PARTS))
    ]
    frames = []
    for frame_index in range(_TRACE_FRAMES):
        active = touching.get(frame_index)
        hand = _PARKED_HAND if active is None else _hand_at(active)
        frames.append(
            DetectionFrame(
                frame_index=frame_index,
                hands=[hand],
                rois=list(part_rois),
                objects=list(seeds) if frame_index == 0 else [],
            )
        )
    reference = [
        StepSegment(start_frame=start, end_frame=end, step_id=i)
        for i, (start, end, _reach) in enumerate(_BURSTS)
    ]
    return frames, reference


# -- sandwich task -------------------------------------------------------

BREAD = "bread"
HAM = "ham-on-top-of-bread"
LETTUCE = "lettuce-on-top-of-ham"
TOP_BREAD = "bread-on-top-of-lettuce"
TOMATO = "tomato-on-top-of-bread"
CUCUMBER = "cucumber-on-top-of-ham"

SANDWICH_CLASSES = (BREAD, HAM, LETTUCE, TOP_BREAD, TOMATO, CUCUMBER)


def sandwich_fsm(debounce: int = 3) -> TaskFsm:
    """Sandwich assembly with two wrong-ingredient detours.

    Error edges carry priority 0 so a mistake wins over normal progress
    the moment both predicates hold; recovery prefers skipping straight
    ahead when the correct ingredient is already in place.
    """
    states = (
        FsmState(
            name="start",
            kind=START,
            guidance="Put a piece of bread on the table",
            transitions=(
                Transition(
                    to_state="bread-placed",
                    priority=10,
                    predicate=p_and(atom(BREAD), p_not(atom(TOMATO))),
                ),
            ),
        ),
        FsmState(
            name="bread-placed",
            kind=NORMAL,
            guidance="Put a piece of ham on the bread",
            transitions=(
                Transition(to_state="tomato-error", priority=0, predicate=atom(TOMATO)),
                Transition(
                    to_state="ham-on-bread",
                    priority=10,
                    predicate=p_and(atom(HAM), p_not(atom(CUCUMBER))),
                ),
            ),
        ),
        FsmState(
            name="tomato-error",
            kind=ERROR,
            guidance="That's a tomato. Remove it and put a piece of ham on the bread",
            transitions=(
                Transition(to_state="ham-on-bread", priority=5, predicate=atom(HAM)),
                Transition(
                    to_state="bread-placed",
                    priority=10,
                    predicate=p_and(atom(BREAD), p_not(atom(TOMATO))),
                ),
            ),
        ),
        FsmState(
            name="ham-on-bread",
            kind=NORMAL,
            guidance="Put a piece of lettuce on the ham",
            transitions=(
                Transition(to_state="cucumber-error", priority=0, predicate=atom(CUCUMBER)),
                Transition(to_state="lettuce-on-ham", priority=10, predicate=atom(LETTUCE)),
            ),
        ),
        FsmState(
            name="cucumber-error",
            kind=ERROR,
            guidance="That's a cucumber. Remove it and put a piece of lettuce on the ham",
            transitions=(
                Transition(to_state="lettuce-on-ham", priority=5, predicate=atom(LETTUCE)),
                Transition(
                    to_state="ham-on-bread",
                    priority=10,
                    predicate=p_and(atom(HAM), p_not(atom(CUCUMBER))),
                ),
            ),
        ),
        FsmState(
            name="lettuce-on-ham",
            kind=NORMAL,
            guidance="Put a piece of bread on the lettuce",
            transitions=(
                Transition(to_state="done", priority=10, predicate=atom(TOP_BREAD)),
            ),
        ),
        FsmState(name="done", kind=DONE, guidance="You are done. Enjoy your sandwich!"),
    )
    return TaskFsm(
        task_name="sandwich",
        states=states,
        detector_classes=SANDWICH_CLASSES,
        debounce=debounce,
    )


def _det(label: str, score: float = 0.95) -> BoundingBox:
    return BoundingBox(x_min=10, y_min=10, x_max=60, y_max=60, label=label, score=score)


def _phase(labels: list[str], frames: int = 4) -> list[list[BoundingBox]]:
    return [[_det(label) for label in labels] for _ in range(frames)]


def sandwich_timelines() -> dict[str, list[list[BoundingBox]]]:
    """Detection timelines: one clean run and one per error detour.

    Phases last four frames, one more than the default debounce, so each
    transition fires inside its phase.
    """
    normal = (
        _phase([])
        + _phase([BREAD])
        + _phase([BREAD, HAM])
        + _phase([BREAD, HAM, LETTUCE])
        + _phase([BREAD, HAM, LETTUCE, TOP_BREAD])
    )
    tomato = (
        _phase([])
        + _phase([BREAD])
        + _phase([BREAD, TOMATO])
        + _phase([BREAD])
        + _phase([BREAD, HAM])
        + _phase([BREAD, HAM, LETTUCE])
        + _phase([BREAD, HAM, LETTUCE, TOP_BREAD])
    )
    cucumber = (
        _phase([])
        + _phase([BREAD])
        + _phase([BREAD, HAM])
        + _phase([BREAD, HAM, CUCUMBER])
        + _phase([BREAD, HAM])
        + _phase([BREAD, HAM, LETTUCE])
        + _phase([BREAD, HAM, LETTUCE, TOP_BREAD])
    )
    return {"normal": normal, "tomato-detour": tomato, "cucumber-detour": cucumber}


# -- synthetic video -----------------------------------------------------


def square_video(
    frame_count: int = 15,
    shape: tuple[int, int] = (120, 160),
    start: tuple[int, int] = (10, 20),
    velocity: tuple[int, int] = (3, 0),
    size: int = 20,
    seed: int = 7,
    noise_sigma: float = 2.0,
) -> tuple[list[np.ndarray], list[BoundingBox]]:
    """A textured square sliding over a flat background.

    Returns uint8 RGB frames and the true box per frame.  The square's
    texture is fixed across frames; only sensor-style noise varies.
    """
    height, width = shape
    rng = np.random.default_rng(seed)
    texture = rng.integers(80, 240, size=(size, size, 3)).astype(np.float64)
    frames = []
    boxes = []
    x0, y0 = start
    for i in range(frame_count):
        x = x0 + velocity[0] * i
        y = y0 + velocity[1] * i
        if x < 0 or y < 0 or x + size > width or y + size > height:
            raise ValueError(f"square leaves the frame at step {i}")
        canvas = np.full((height, width, 3), 40.0)
        canvas[y : y + size, x : x + size] = texture
        canvas += rng.normal(0.0, noise_sigma, size=canvas.shape)
        frames.append(np.clip(canvas, 0, 255).astype(np.uint8))
        boxes.append(BoundingBox(x_min=x, y_min=y, x_max=x + size, y_max=y + size))
    return frames, boxes
