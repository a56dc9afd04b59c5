"""Compilation of task models into deployable packages.

The runtime never interprets an authored model directly; it runs a
compiled form where every transition predicate is flattened into a
postfix program for a tiny stack machine.  That keeps the runtime loop
free of recursion and makes the deployed artifact auditable: the
package is a single canonical JSON document whose SHA-256 checksum is
embedded, so a byte got flipped or a file got hand-edited is detected
at load time instead of mid-session.

Canonical form: sorted keys, no whitespace, checksum field excluded
from its own digest.  Compiling the same model twice yields identical
bytes, so checksums can be compared across machines.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Union

from .errors import CompileError, PackageError
from .fsm import (
    AND,
    ATOM,
    NOT,
    OR,
    Predicate,
    TaskFsm,
    errors_of,
    validate_fsm,
)

PACKAGE_FORMAT_VERSION = 1
PACKAGE_FILE_NAME = "package.json"

OP_COUNT = "count"
OP_AND = "and"
OP_OR = "or"
OP_NOT = "not"


def compile_predicate(pred: Predicate) -> list[dict]:
    """Post-order flattening: children first, then the combining op.

    ``and``/``or`` nodes with more than two children unroll into a chain
    of binary ops so the stack machine needs only fixed-arity operators.
    """
    if pred.op == ATOM:
        return [
            {
                "op": OP_COUNT,
                "class_name": pred.class_name,
                "min_count": pred.min_count,
                "min_score": pred.min_score,
            }
        ]
    if pred.op == NOT:
        return compile_predicate(pred.children[0]) + [{"op": OP_NOT}]
    if pred.op in (AND, OR):
        combiner = OP_AND if pred.op == AND else OP_OR
        program = compile_predicate(pred.children[0])
        for child in pred.children[1:]:
            program += compile_predicate(child)
            program.append({"op": combiner})
        return program
    raise CompileError(f"cannot compile predicate op {pred.op!r}")


def canonical_bytes(document: dict) -> bytes:
    return json.dumps(document, sort_keys=True, separators=(",", ":")).encode("utf-8")


def checksum_of(document: dict) -> str:
    stripped = {k: v for k, v in document.items() if k != "checksum"}
    return hashlib.sha256(canonical_bytes(stripped)).hexdigest()


def compile_fsm(fsm: TaskFsm) -> dict:
    """Validate and compile a task model into a package document."""
    diagnostics = validate_fsm(fsm)
    problems = errors_of(diagnostics)
    if problems:
        raise CompileError(
            f"task model has {len(problems)} validation error(s)",
            diagnostics=[str(d) for d in diagnostics],
        )
    document = {
        "format_version": PACKAGE_FORMAT_VERSION,
        "task_name": fsm.task_name,
        "debounce": fsm.debounce,
        "detector_classes": sorted(fsm.detector_classes),
        "start_state": fsm.start_state,
        "states": [
            {
                "name": state.name,
                "kind": state.kind,
                "guidance": state.guidance,
                "transitions": [
                    {
                        "to": t.to_state,
                        "priority": t.priority,
                        "program": compile_predicate(t.predicate),
                    }
                    for t in sorted(state.transitions, key=lambda t: t.priority)
                ],
            }
            for state in fsm.states
        ],
    }
    document["checksum"] = checksum_of(document)
    return document


def check_package(document: dict) -> dict:
    """Structural and integrity checks on a package document."""
    if not isinstance(document, dict):
        raise PackageError("package must be a JSON object")
    if document.get("format_version") != PACKAGE_FORMAT_VERSION:
        raise PackageError(
            f"unsupported package format_version {document.get('format_version')!r}"
        )
    stated = document.get("checksum")
    actual = checksum_of(document)
    if stated != actual:
        raise PackageError(f"package checksum mismatch: stated {stated!r}, actual {actual!r}")
    states = document.get("states")
    if not isinstance(states, list) or not states:
        raise PackageError("package has no states")
    names = {s.get("name") for s in states}
    if document.get("start_state") not in names:
        raise PackageError(f"start_state {document.get('start_state')!r} not among states")
    for state in states:
        for transition in state.get("transitions", []):
            if transition.get("to") not in names:
                raise PackageError(
                    f"state {state.get('name')!r} transition targets unknown "
                    f"state {transition.get('to')!r}"
                )
            _check_program(transition.get("program"), state.get("name"))
    return document


def _check_program(program, state_name) -> None:
    if not isinstance(program, list) or not program:
        raise PackageError(f"state {state_name!r} has an empty transition program")
    depth = 0
    for i, instruction in enumerate(program):
        op = instruction.get("op") if isinstance(instruction, dict) else None
        if op == OP_COUNT:
            depth += 1
        elif op == OP_NOT:
            if depth < 1:
                raise PackageError(f"state {state_name!r} program underflows at op {i}")
        elif op in (OP_AND, OP_OR):
            if depth < 2:
                raise PackageError(f"state {state_name!r} program underflows at op {i}")
            depth -= 1
        else:
            raise PackageError(f"state {state_name!r} program has unknown op {op!r}")
    if depth != 1:
        raise PackageError(
            f"state {state_name!r} program leaves {depth} values on the stack"
        )


def save_package(document: dict, path: Union[str, Path]) -> Path:
    """Write a package directory containing the canonical document."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    target = root / PACKAGE_FILE_NAME
    target.write_bytes(canonical_bytes(document) + b"\n")
    return target


def load_package(path: Union[str, Path]) -> dict:
    """Load and verify a package from a directory or a package.json path."""
    target = Path(path)
    if target.is_dir():
        target = target / PACKAGE_FILE_NAME
    if not target.is_file():
        raise PackageError(f"no package found at {target}")
    try:
        document = json.loads(target.read_text())
    except json.JSONDecodeError as exc:
        raise PackageError(f"package is not valid JSON: {exc}") from exc
    return check_package(document)
