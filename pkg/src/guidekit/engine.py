"""Guidance engine: replays a compiled task package against detections.

Per frame the engine evaluates the current state's transitions in
priority order and takes the first whose program is satisfied as the
frame's candidate.  A transition only fires once the same candidate has
won ``debounce`` consecutive frames; a single glitched detection frame
therefore cannot advance the task or bounce it into an error state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import PackageError
from .geometry import BoundingBox
from .package import OP_AND, OP_COUNT, OP_NOT, OP_OR, check_package

logger = logging.getLogger(__name__)


def run_program(program: Sequence[dict], detections: Sequence[BoundingBox]) -> bool:
    """Execute one postfix transition program against a detection list."""
    stack: list[bool] = []
    for instruction in program:
        op = instruction.get("op")
        if op == OP_COUNT:
            count = sum(
                1
                for box in detections
                if box.label == instruction.get("class_name")
                and (box.score is None or box.score >= instruction.get("min_score", 0.0))
            )
            stack.append(count >= instruction.get("min_count", 1))
        elif op == OP_NOT:
            if not stack:
                raise PackageError("program underflow on not")
            stack.append(not stack.pop())
        elif op in (OP_AND, OP_OR):
            if len(stack) < 2:
                raise PackageError(f"program underflow on {op}")
            b, a = stack.pop(), stack.pop()
            stack.append((a and b) if op == OP_AND else (a or b))
        else:
            raise PackageError(f"unknown program op {op!r}")
    if len(stack) != 1:
        raise PackageError(f"program left {len(stack)} values on the stack")
    return stack[0]


@dataclass(frozen=True)
class EngineStatus:
    """What one frame did to the task."""

    state: str
    guidance: str
    changed: bool
    done: bool
    candidate: Optional[str] = None  # target the engine is counting toward
    counter: int = 0


class Engine:
    def __init__(self, package: dict):
        self.package = check_package(package)
        self.debounce = int(self.package.get("debounce", 1))
        self._states = {s["name"]: s for s in self.package["states"]}
        self.current = self.package["start_state"]
        self._counters: dict[int, int] = {}

    @property
    def guidance(self) -> str:
        return self._states[self.current].get("guidance", "")

    @property
    def done(self) -> bool:
        return self._states[self.current].get("kind") == "done"

    def reset(self) -> None:
        self.current = self.package["start_state"]
        self._counters.clear()

    def step(self, detections: Sequence[BoundingBox]) -> EngineStatus:
        state = self._states[self.current]
        if state.get("kind") == "done":
            return EngineStatus(
                state=self.current, guidance=self.guidance, changed=False, done=True
            )
        transitions = state.get("transitions", [])
        winner = None
        for index, transition in enumerate(transitions):
            if run_program(transition["program"], detections):
                winner = index
                break
        if winner is None:
            self._counters.clear()
            return EngineStatus(
                state=self.current, guidance=self.guidance, changed=False, done=False
            )
        count = self._counters.get(winner, 0) + 1
        self._counters = {winner: count}
        target = transitions[winner]["to"]
        if count >= self.debounce:
            logger.debug("transition %s -> %s after %d frames", self.current, target, count)
            self.current = target
            self._counters.clear()
            return EngineStatus(
                state=self.current,
                guidance=self.guidance,
                changed=True,
                done=self.done,
            )
        return EngineStatus(
            state=self.current,
            guidance=self.guidance,
            changed=False,
            done=False,
            candidate=target,
            counter=count,
        )


def simulate(package: dict, frames: Sequence[Sequence[BoundingBox]]) -> list[EngineStatus]:
    """Batch replay: one status per detection frame, from a fresh engine."""
    engine = Engine(package)
    return [engine.step(detections) for detections in frames]
