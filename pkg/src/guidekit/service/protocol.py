"""Wire protocol for the streaming guidance service.

Every WebSocket message is one JSON object with the same four fields:

    {"type": ..., "session_id": ..., "sequence": ..., "payload": {...}}

Clients send ``hello`` once, then ``frame`` (an image to run the
detector on) or ``detections`` (precomputed boxes).  The server answers
``ack`` to hello, ``guidance`` to accepted inputs, and ``error``
otherwise.  Sequences increase strictly in each direction.

Flow control is token based: hello grants ``tokens`` credits, each
accepted input consumes one until its guidance reply returns it, and
inputs beyond the credit limit are rejected with the ``flow_control``
error code.  A head-mounted client therefore cannot queue a backlog of
stale frames behind a slow network or detector; it always learns
promptly that a frame was dropped and can send a fresher one instead.
"""

from __future__ import annotations

import json
from typing import Sequence

from ..errors import ProtocolError

PROTOCOL_VERSION = 1

HELLO = "hello"
FRAME = "frame"
DETECTIONS = "detections"
GUIDANCE = "guidance"
ACK = "ack"
ERROR = "error"

CLIENT_TYPES = (HELLO, FRAME, DETECTIONS)
SERVER_TYPES = (GUIDANCE, ACK, ERROR)
MESSAGE_TYPES = CLIENT_TYPES + SERVER_TYPES

ERR_BAD_MESSAGE = "bad_message"
ERR_SEQUENCE = "sequence"
ERR_FLOW_CONTROL = "flow_control"
ERR_UNKNOWN_TASK = "unknown_task"
ERR_NOT_READY = "not_ready"
ERR_ALREADY_STARTED = "already_started"
ERR_NO_DETECTOR = "no_detector"
ERR_VERSION = "version"
ERR_INTERNAL = "internal"

DEFAULT_MAX_TOKENS = 2


def make_message(type: str, session_id: str, sequence: int, payload: dict) -> dict:
    return {
        "type": type,
        "session_id": session_id,
        "sequence": sequence,
        "payload": payload,
    }


def check_message(record) -> dict:
    if not isinstance(record, dict):
        raise ProtocolError("message must be a JSON object", code=ERR_BAD_MESSAGE)
    msg_type = record.get("type")
    if msg_type not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {msg_type!r}", code=ERR_BAD_MESSAGE)
    if not isinstance(record.get("session_id"), str) or not record["session_id"]:
        raise ProtocolError("session_id must be a non-empty string", code=ERR_BAD_MESSAGE)
    sequence = record.get("sequence")
    if not isinstance(sequence, int) or isinstance(sequence, bool) or sequence < 0:
        raise ProtocolError("sequence must be a non-negative integer", code=ERR_BAD_MESSAGE)
    if not isinstance(record.get("payload"), dict):
        raise ProtocolError("payload must be an object", code=ERR_BAD_MESSAGE)
    return record


def parse_message(text: str) -> dict:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"message is not valid JSON: {exc}", code=ERR_BAD_MESSAGE) from exc
    return check_message(record)


def dump_message(record: dict) -> str:
    return json.dumps(record)


def audit_transcript(transcript: Sequence[tuple[str, dict]], max_tokens: int) -> int:
    """Verify a client-side transcript never exceeded the token budget.

    ``transcript`` is the session in order: ("sent", message) and
    ("received", message) entries.  An input counts as in flight from
    the moment it was sent until its guidance reply; inputs the server
    rejected with ``flow_control`` never held a token.  Returns the peak
    number of in-flight inputs and raises if it exceeds ``max_tokens``.
    """
    rejected = set()
    for direction, record in transcript:
        if direction != "received":
            continue
        payload = record.get("payload", {})
        if record.get("type") == ERROR and payload.get("code") == ERR_FLOW_CONTROL:
            rejected.add(payload.get("for_sequence"))
    in_flight = 0
    peak = 0
    for direction, record in transcript:
        if direction == "sent" and record.get("type") in (FRAME, DETECTIONS):
            if record.get("sequence") not in rejected:
                in_flight += 1
                peak = max(peak, in_flight)
        elif direction == "received" and record.get("type") == GUIDANCE:
            in_flight -= 1
    if peak > max_tokens:
        raise ProtocolError(
            f"transcript held {peak} inputs in flight with a budget of {max_tokens}",
            code=ERR_FLOW_CONTROL,
        )
    return peak
