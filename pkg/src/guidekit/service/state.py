"""In-memory application state for the authoring service.

Everything lives in dicts behind one re-entrant lock: the authoring
workloads are small (one team editing a handful of tasks), so a single
coarse lock is simpler to reason about than per-store locking and is
nowhere near contention.  Persistence stays the caller's concern; the
CLI loads documents from disk at startup and saves on demand.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from ..errors import ConflictError, LoadError, PackageError
from ..labeling import AnnotationSet
from ..package import load_package
from ..trace import DetectionFrame
from ..workflow import Workflow
from .protocol import DEFAULT_MAX_TOKENS

logger = logging.getLogger(__name__)

ENV_BIND_ADDR = "BIND_ADDR"
ENV_PACKAGE_DIR = "PACKAGE_DIR"
ENV_MAX_TOKENS = "MAX_TOKENS"
ENV_DETECTOR_PLUGIN = "DETECTOR_PLUGIN"


@dataclass
class ServiceConfig:
    max_tokens: int = DEFAULT_MAX_TOKENS
    frame_delay: float = 0.0  # artificial per-input latency, for tests/demos
    data_dir: Optional[Path] = None
    package_dir: Optional[Path] = None
    detector: Optional[Callable] = None  # image array -> boxes
    detector_plugin: Optional[str] = None

    @classmethod
    def from_env(cls, environ=os.environ) -> "ServiceConfig":
        config = cls()
        if environ.get(ENV_MAX_TOKENS):
            config.max_tokens = int(environ[ENV_MAX_TOKENS])
        if environ.get(ENV_PACKAGE_DIR):
            config.package_dir = Path(environ[ENV_PACKAGE_DIR])
        if environ.get(ENV_DETECTOR_PLUGIN):
            config.detector_plugin = environ[ENV_DETECTOR_PLUGIN]
        return config


def bind_addr_from_env(default: str = "127.0.0.1:8750", environ=os.environ) -> tuple[str, int]:
    value = environ.get(ENV_BIND_ADDR) or default
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise LoadError(f"{ENV_BIND_ADDR} must look like host:port, got {value!r}")
    return host, int(port)


@dataclass
class Project:
    project_id: str
    name: str
    frames_dir: Path
    annotations: AnnotationSet


@dataclass
class AppState:
    config: ServiceConfig
    lock: threading.RLock = field(default_factory=threading.RLock)
    workflows: dict[str, Workflow] = field(default_factory=dict)
    traces: dict[str, list[DetectionFrame]] = field(default_factory=dict)
    fsms: dict[str, object] = field(default_factory=dict)
    packages: dict[str, dict] = field(default_factory=dict)
    projects: dict[str, Project] = field(default_factory=dict)
    next_ids: dict[str, int] = field(default_factory=dict)

    def allocate_id(self, prefix: str) -> str:
        with self.lock:
            n = self.next_ids.get(prefix, 0)
            self.next_ids[prefix] = n + 1
            return f"{prefix}-{n}"

    def expect_revision(self, stored: int, offered, what: str) -> None:
        if not isinstance(offered, int) or offered != stored:
            raise ConflictError(
                f"{what} is at revision {stored}, request carried {offered!r}",
                current_revision=stored,
            )

    def load_packages(self) -> None:
        """Register every compiled package found under config.package_dir."""
        package_dir = self.config.package_dir
        if not package_dir:
            return
        if not Path(package_dir).is_dir():
            raise LoadError(f"package directory {package_dir} does not exist")
        candidates = sorted(Path(package_dir).glob("*/package.json")) + sorted(
            Path(package_dir).glob("*.json")
        )
        for path in candidates:
            if path.name != "package.json" and path.parent != Path(package_dir):
                continue
            try:
                document = load_package(path)
            except PackageError as exc:
                logger.warning("skipping %s: %s", path, exc)
                continue
            task_name = document["task_name"]
            with self.lock:
                self.packages[task_name] = document
            logger.info("registered task package %r from %s", task_name, path)
