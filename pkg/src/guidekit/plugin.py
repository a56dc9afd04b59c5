"""Out-of-process detector plugins.

A detector plugin is any executable that speaks line-delimited JSON on
stdin/stdout: it announces itself with a ``ready`` line, then answers
``detect`` requests with ``detections``.  Keeping detectors in their own
process isolates their (often heavy, often conflicting) dependencies
from the authoring tools and lets a GPU-backed detector replace the
built-in baseline without any import-time coupling.

    -> {"type": "ready", "protocol_version": 1, "classes": ["bread", ...]}
    <- {"type": "detect", "id": 1, "image_ref": "/tmp/frame.png"}
    -> {"type": "detections", "id": 1, "boxes": [{...}]}

Errors are reported per request and never kill the loop.
"""

from __future__ import annotations

import json
import logging
import select
import shlex
import subprocess
import sys
import tempfile
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ProtocolError
from .geometry import BoundingBox
from .imaging import load_image, save_image
from .trace import box_from_json, box_to_json

logger = logging.getLogger(__name__)

PLUGIN_PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0

DetectFn = Callable[[np.ndarray], Sequence[BoundingBox]]


def run_plugin_loop(
    detect_fn: DetectFn,
    classes: Sequence[str],
    stdin=None,
    stdout=None,
) -> None:
    """Serve ``detect_fn`` as a plugin until stdin closes.

    Meant to be the entire main() of a plugin executable.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(record: dict) -> None:
        stdout.write(json.dumps(record) + "\n")
        stdout.flush()

    emit(
        {
            "type": "ready",
            "protocol_version": PLUGIN_PROTOCOL_VERSION,
            "classes": sorted(classes),
        }
    )
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        request_id = None
        try:
            request = json.loads(line)
            request_id = request.get("id")
            if request.get("type") != "detect":
                raise ProtocolError(f"unsupported request type {request.get('type')!r}")
            image = load_image(request["image_ref"])
            boxes = detect_fn(image)
            emit(
                {
                    "type": "detections",
                    "id": request_id,
                    "boxes": [box_to_json(b) for b in boxes],
                }
            )
        except Exception as exc:  # keep serving after a bad request
            logger.exception("plugin request failed")
            emit({"type": "error", "id": request_id, "message": str(exc)})


class PluginDetector:
    """Parent-side client for a detector plugin subprocess."""

    def __init__(self, command: Union[str, Sequence[str]], timeout: float = DEFAULT_TIMEOUT):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._next_id = 1
        try:
            self.process = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot start detector plugin {argv!r}: {exc}") from exc
        try:
            ready = self._read_record()
            if ready.get("type") != "ready":
                raise ProtocolError(f"plugin sent {ready.get('type')!r} instead of ready")
            if ready.get("protocol_version") != PLUGIN_PROTOCOL_VERSION:
                raise ProtocolError(
                    f"plugin protocol_version {ready.get('protocol_version')!r} unsupported"
                )
        except ProtocolError:
            self.process.kill()
            self.process.wait()
            raise
        self.classes: list[str] = list(ready.get("classes", []))

    def _read_record(self) -> dict:
        stream = self.process.stdout
        assert stream is not None
        readable, _, _ = select.select([stream], [], [], self.timeout)
        if not readable:
            raise ProtocolError(f"detector plugin timed out after {self.timeout}s")
        line = stream.readline()
        if not line:
            raise ProtocolError("detector plugin closed its output")
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"plugin sent invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise ProtocolError("plugin records must be JSON objects")
        return record

    def detect_path(self, image_ref: Union[str, Path]) -> list[BoundingBox]:
        request_id = self._next_id
        self._next_id += 1
        stdin = self.process.stdin
        assert stdin is not None
        stdin.write(
            json.dumps({"type": "detect", "id": request_id, "image_ref": str(image_ref)})
            + "\n"
        )
        stdin.flush()
        record = self._read_record()
        if record.get("id") != request_id:
            raise ProtocolError(
                f"plugin answered id {record.get('id')!r} to request {request_id}"
            )
        if record.get("type") == "error":
            raise ProtocolError(f"plugin error: {record.get('message')}")
        if record.get("type") != "detections":
            raise ProtocolError(f"unexpected plugin record type {record.get('type')!r}")
        return [
            box_from_json(b, context=f"plugin box[{i}]")
            for i, b in enumerate(record.get("boxes", []))
        ]

    def detect(self, image: np.ndarray) -> list[BoundingBox]:
        with tempfile.NamedTemporaryFile(suffix=".png", delete=True) as handle:
            save_image(image, handle.name)
            return self.detect_path(handle.name)

    def close(self) -> None:
        if self.process.poll() is None:
            if self.process.stdin is not None:
                try:
                    self.process.stdin.close()
                except OSError:
                    pass
            try:
                self.process.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self.process.kill()
                self.process.wait()

    def __enter__(self) -> "PluginDetector":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def detector_from_env(
    command: Optional[str], fallback: Optional[DetectFn] = None
) -> Optional[DetectFn]:
    """Wrap a plugin command (e.g. from an environment variable) as a plain
    image -> boxes callable, or fall back to an in-process detector."""
    if command:
        client = PluginDetector(command)
        return client.detect
    return fallback
