"""HTTP authoring API and WebSocket guidance endpoint.

One FastAPI application serves both halves of the toolchain:

* REST-ish authoring routes over in-memory stores (traces, workflows,
  projects, task models, compiled packages, simulations), with
  optimistic concurrency: writes carry the revision they were based on
  and collide with 409 instead of silently overwriting a teammate;
* ``/ws``, the streaming endpoint a wearable client connects to for
  live task guidance.

The WebSocket side splits each connection into a reader and a worker
coroutine: the reader enforces sequencing and token flow control the
moment a message arrives, while the worker runs the (possibly slow)
detector and engine without ever blocking the reader.
"""

from __future__ import annotations

import asyncio
import base64
import io
import logging
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from PIL import Image

from .. import workflow as wf
from ..association import associate_trace
from ..engine import Engine, simulate
from ..errors import (
    CompileError,
    ConflictError,
    EditError,
    ExportError,
    GuidekitError,
    InputError,
    LoadError,
    PackageError,
    ProtocolError,
    PropagationError,
    ScaffoldError,
    TrainError,
)
from ..fsm import fsm_from_json, fsm_to_json, scaffold_from_workflow, validate_fsm
from ..imaging import ImageDirFrames
from ..labeling import PropagationConfig, annotations_from_json, annotations_to_json
from ..dataset import export_dataset
from ..package import check_package, compile_fsm
from ..plugin import detector_from_env
from ..segmentation import SegmentationConfig, segment_trace
from ..trace import box_from_json, box_to_json, check_contiguous, frame_from_json
from .protocol import (
    ACK,
    DETECTIONS,
    ERR_ALREADY_STARTED,
    ERR_BAD_MESSAGE,
    ERR_FLOW_CONTROL,
    ERR_INTERNAL,
    ERR_NO_DETECTOR,
    ERR_NOT_READY,
    ERR_SEQUENCE,
    ERR_UNKNOWN_TASK,
    ERR_VERSION,
    ERROR,
    FRAME,
    GUIDANCE,
    HELLO,
    PROTOCOL_VERSION,
    dump_message,
    make_message,
    parse_message,
)
from .state import AppState, Project, ServiceConfig

logger = logging.getLogger(__name__)

_STATUS_CODES = (
    (ConflictError, 409),
    (CompileError, 422),
    (
        (
            InputError,
            LoadError,
            EditError,
            PackageError,
            ProtocolError,
            PropagationError,
            ScaffoldError,
            ExportError,
            TrainError,
        ),
        400,
    ),
)


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    config = config or ServiceConfig()
    if config.detector is None and config.detector_plugin:
        config.detector = detector_from_env(config.detector_plugin)
    app = FastAPI(title="guidekit authoring service")
    # The browser UI is served as static files from wherever is handy,
    # so the API answers cross-origin requests.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = AppState(config=config)
    state.load_packages()
    app.state.guidekit = state
    _register_error_handlers(app)
    _register_http_routes(app)
    _register_ws_route(app)
    return app


def _register_error_handlers(app: FastAPI) -> None:
    def handler_for(status: int):
        async def handle(request: Request, exc: GuidekitError):
            body = {"error": str(exc)}
            if isinstance(exc, ConflictError) and exc.current_revision is not None:
                body["current_revision"] = exc.current_revision
            if isinstance(exc, CompileError) and exc.diagnostics:
                body["diagnostics"] = exc.diagnostics
            return JSONResponse(status_code=status, content=body)

        return handle

    for exc_types, status in _STATUS_CODES:
        for exc_type in exc_types if isinstance(exc_types, tuple) else (exc_types,):
            app.add_exception_handler(exc_type, handler_for(status))


def _state(request: Request) -> AppState:
    return request.app.state.guidekit


def _not_found(what: str, key: str) -> JSONResponse:
    return JSONResponse(status_code=404, content={"error": f"no {what} {key!r}"})


def _segment_json(segment) -> dict:
    return {
        "start_frame": segment.start_frame,
        "end_frame": segment.end_frame,
        "step_id": segment.step_id,
    }


def _status_json(status) -> dict:
    return {
        "state": status.state,
        "guidance": status.guidance,
        "changed": status.changed,
        "done": status.done,
        "candidate": status.candidate,
        "counter": status.counter,
    }


def _png_response(image: np.ndarray) -> Response:
    buffer = io.BytesIO()
    Image.fromarray(np.asarray(image)).save(buffer, format="PNG")
    return Response(content=buffer.getvalue(), media_type="image/png")


def _resolve_under(root: Path, relative: str) -> Path:
    resolved = (root / relative).resolve()
    if not str(resolved).startswith(str(root.resolve()) + "/") and resolved != root.resolve():
        raise InputError(f"path {relative!r} escapes the data directory")
    return resolved


def _segmentation_config(record: dict) -> SegmentationConfig:
    defaults = SegmentationConfig()
    return SegmentationConfig(
        window_size=int(record.get("window_size", defaults.window_size)),
        threshold=float(record.get("threshold", defaults.threshold)),
        min_step_frames=int(record.get("min_step_frames", defaults.min_step_frames)),
        min_roi_area=int(record.get("min_roi_area", defaults.min_roi_area)),
    )


def _register_http_routes(app: FastAPI) -> None:
    @app.get("/health")
    async def health():
        return {"status": "ok", "protocol_version": PROTOCOL_VERSION}

    # -- traces ----------------------------------------------------------

    @app.post("/traces", status_code=201)
    async def create_trace(request: Request):
        state = _state(request)
        body = await request.json()
        frames_json = body.get("frames")
        if not isinstance(frames_json, list):
            raise InputError("trace body needs a frames list")
        frames = [
            frame_from_json(f, context=f"frames[{i}]") for i, f in enumerate(frames_json)
        ]
        check_contiguous(frames)
        with state.lock:
            trace_id = str(body.get("trace_id") or state.allocate_id("trace"))
            if trace_id in state.traces:
                raise ConflictError(f"trace {trace_id!r} already exists")
            state.traces[trace_id] = frames
        return {"trace_id": trace_id, "frame_count": len(frames)}

    @app.get("/traces")
    async def list_traces(request: Request):
        state = _state(request)
        with state.lock:
            return {
                "traces": [
                    {"trace_id": trace_id, "frame_count": len(frames)}
                    for trace_id, frames in sorted(state.traces.items())
                ]
            }

    @app.post("/traces/{trace_id}/segment")
    async def segment_stored_trace(trace_id: str, request: Request):
        state = _state(request)
        body = await request.json() if await _has_body(request) else {}
        with state.lock:
            frames = state.traces.get(trace_id)
        if frames is None:
            return _not_found("trace", trace_id)
        segments = segment_trace(frames, _segmentation_config(body))
        return {"trace_id": trace_id, "segments": [_segment_json(s) for s in segments]}

    @app.post("/traces/{trace_id}/workflow", status_code=201)
    async def workflow_from_trace(trace_id: str, request: Request):
        state = _state(request)
        body = await request.json()
        with state.lock:
            frames = state.traces.get(trace_id)
        if frames is None:
            return _not_found("trace", trace_id)
        fps = float(body.get("fps", 30.0))
        segments = segment_trace(frames, _segmentation_config(body))
        result = associate_trace(frames)
        with state.lock:
            workflow_id = str(body.get("workflow_id") or state.allocate_id("workflow"))
            if workflow_id in state.workflows:
                raise ConflictError(f"workflow {workflow_id!r} already exists")
            workflow = wf.from_associations(
                segments, result, workflow_id=workflow_id, video_ref=trace_id, fps=fps
            )
            state.workflows[workflow_id] = workflow
        return wf.workflow_to_json(workflow)

    # -- workflows -------------------------------------------------------

    @app.get("/workflows")
    async def list_workflows(request: Request):
        state = _state(request)
        with state.lock:
            return {
                "workflows": [
                    wf.workflow_to_json(state.workflows[k]) for k in sorted(state.workflows)
                ]
            }

    @app.post("/workflows", status_code=201)
    async def create_workflow(request: Request):
        state = _state(request)
        workflow = wf.workflow_from_json(await request.json())
        with state.lock:
            if workflow.workflow_id in state.workflows:
                raise ConflictError(f"workflow {workflow.workflow_id!r} already exists")
            state.workflows[workflow.workflow_id] = workflow
        return wf.workflow_to_json(workflow)

    @app.get("/workflows/{workflow_id}")
    async def get_workflow(workflow_id: str, request: Request):
        state = _state(request)
        with state.lock:
            workflow = state.workflows.get(workflow_id)
        if workflow is None:
            return _not_found("workflow", workflow_id)
        return wf.workflow_to_json(workflow)

    @app.put("/workflows/{workflow_id}")
    async def replace_workflow(workflow_id: str, request: Request):
        state = _state(request)
        offered = wf.workflow_from_json(await request.json())
        if offered.workflow_id != workflow_id:
            raise InputError("workflow_id in body does not match the URL")
        with state.lock:
            stored = state.workflows.get(workflow_id)
            if stored is None:
                return _not_found("workflow", workflow_id)
            state.expect_revision(stored.revision, offered.revision, f"workflow {workflow_id!r}")
            updated = replace(offered, revision=stored.revision + 1)
            state.workflows[workflow_id] = updated
        return wf.workflow_to_json(updated)

    @app.post("/workflows/{workflow_id}/edits")
    async def edit_workflow(workflow_id: str, request: Request):
        state = _state(request)
        body = await request.json()
        op = body.get("op")
        with state.lock:
            stored = state.workflows.get(workflow_id)
            if stored is None:
                return _not_found("workflow", workflow_id)
            state.expect_revision(stored.revision, body.get("revision"), f"workflow {workflow_id!r}")
            if op == "split":
                updated = wf.split_step(stored, int(body["step_id"]), int(body["frame"]))
            elif op == "merge":
                updated = wf.merge_steps(stored, int(body["step_id"]))
            elif op == "edit_objects":
                updated = wf.edit_objects(
                    stored,
                    int(body["step_id"]),
                    add=[str(o) for o in body.get("add", [])],
                    remove=[str(o) for o in body.get("remove", [])],
                )
            elif op == "set_completion":
                updated = wf.set_completion(stored, int(body["step_id"]), body.get("object"))
            elif op == "set_note":
                updated = wf.set_note(stored, int(body["step_id"]), body.get("note"))
            else:
                raise EditError(f"unknown edit op {op!r}")
            state.workflows[workflow_id] = updated
        return wf.workflow_to_json(updated)

    @app.get("/workflows/{workflow_id}/frames/{index}.png")
    async def workflow_frame(workflow_id: str, index: int, request: Request):
        state = _state(request)
        with state.lock:
            workflow = state.workflows.get(workflow_id)
        if workflow is None:
            return _not_found("workflow", workflow_id)
        if state.config.data_dir is None:
            raise InputError("service is running without a data directory")
        frames_dir = _resolve_under(Path(state.config.data_dir), workflow.video_ref)
        frames = ImageDirFrames(frames_dir)
        if not (0 <= index < len(frames)):
            return _not_found("frame", str(index))
        return _png_response(frames[index])

    # -- projects --------------------------------------------------------

    @app.post("/projects", status_code=201)
    async def create_project(request: Request):
        state = _state(request)
        body = await request.json()
        if state.config.data_dir is None:
            raise InputError("service is running without a data directory")
        frames_ref = str(body.get("frames_dir", ""))
        frames_dir = _resolve_under(Path(state.config.data_dir), frames_ref)
        frames = ImageDirFrames(frames_dir)  # validates the directory
        from ..labeling import AnnotationSet

        with state.lock:
            project_id = state.allocate_id("project")
            project = Project(
                project_id=project_id,
                name=str(body.get("name") or project_id),
                frames_dir=frames_dir,
                annotations=AnnotationSet(video_ref=frames_ref),
            )
            state.projects[project_id] = project
        return _project_json(project, len(frames))

    @app.get("/projects")
    async def list_projects(request: Request):
        state = _state(request)
        with state.lock:
            projects = [state.projects[k] for k in sorted(state.projects)]
        return {"projects": [_project_json(p, len(ImageDirFrames(p.frames_dir))) for p in projects]}

    @app.get("/projects/{project_id}")
    async def get_project(project_id: str, request: Request):
        state = _state(request)
        with state.lock:
            project = state.projects.get(project_id)
        if project is None:
            return _not_found("project", project_id)
        return _project_json(project, len(ImageDirFrames(project.frames_dir)))

    @app.get("/projects/{project_id}/frames/{index}.png")
    async def project_frame(project_id: str, index: int, request: Request):
        state = _state(request)
        with state.lock:
            project = state.projects.get(project_id)
        if project is None:
            return _not_found("project", project_id)
        frames = ImageDirFrames(project.frames_dir)
        if not (0 <= index < len(frames)):
            return _not_found("frame", str(index))
        return _png_response(frames[index])

    @app.get("/projects/{project_id}/annotations")
    async def get_annotations(project_id: str, request: Request):
        state = _state(request)
        with state.lock:
            project = state.projects.get(project_id)
            if project is None:
                return _not_found("project", project_id)
            return annotations_to_json(project.annotations)

    @app.put("/projects/{project_id}/annotations")
    async def put_annotations(project_id: str, request: Request):
        state = _state(request)
        offered = annotations_from_json(await request.json())
        with state.lock:
            project = state.projects.get(project_id)
            if project is None:
                return _not_found("project", project_id)
            state.expect_revision(
                project.annotations.revision, offered.revision, f"project {project_id!r} annotations"
            )
            offered.revision = project.annotations.revision + 1
            project.annotations = offered
            return annotations_to_json(project.annotations)

    @app.post("/projects/{project_id}/propagate")
    async def propagate_project(project_id: str, request: Request):
        state = _state(request)
        body = await request.json() if await _has_body(request) else {}
        with state.lock:
            project = state.projects.get(project_id)
            if project is None:
                return _not_found("project", project_id)
            state.expect_revision(
                project.annotations.revision, body.get("revision"), f"project {project_id!r} annotations"
            )
        defaults = PropagationConfig()
        config = PropagationConfig(
            search_radius=int(body.get("search_radius", defaults.search_radius)),
            stop_threshold=float(body.get("stop_threshold", defaults.stop_threshold)),
        )
        frames = ImageDirFrames(project.frames_dir)
        with state.lock:
            written = project.annotations.propagate_all(frames, config)
            return {"written": written, "revision": project.annotations.revision}

    @app.post("/projects/{project_id}/export")
    async def export_project(project_id: str, request: Request):
        state = _state(request)
        body = await request.json() if await _has_body(request) else {}
        with state.lock:
            project = state.projects.get(project_id)
            if project is None:
                return _not_found("project", project_id)
        frames = ImageDirFrames(project.frames_dir)
        out_dir = Path(state.config.data_dir) / f"{project_id}-dataset"
        manifest = export_dataset(
            list(frames),
            project.annotations,
            out_dir,
            negatives_per_frame=int(body.get("negatives_per_frame", 0)),
            seed=int(body.get("seed", 0)),
        )
        return {"path": str(out_dir), "manifest": manifest}

    # -- task models and packages ---------------------------------------

    @app.get("/fsms")
    async def list_fsms(request: Request):
        state = _state(request)
        with state.lock:
            return {
                "fsms": [
                    {"task_name": name, "state_count": len(state.fsms[name].states)}
                    for name in sorted(state.fsms)
                ]
            }

    @app.post("/fsms", status_code=201)
    async def create_fsm(request: Request):
        state = _state(request)
        fsm = fsm_from_json(await request.json())
        with state.lock:
            if fsm.task_name in state.fsms:
                raise ConflictError(f"task model {fsm.task_name!r} already exists")
            state.fsms[fsm.task_name] = fsm
        return fsm_to_json(fsm)

    @app.get("/fsms/{task_name}")
    async def get_fsm(task_name: str, request: Request):
        state = _state(request)
        with state.lock:
            fsm = state.fsms.get(task_name)
        if fsm is None:
            return _not_found("task model", task_name)
        return fsm_to_json(fsm)

    @app.put("/fsms/{task_name}")
    async def put_fsm(task_name: str, request: Request):
        state = _state(request)
        fsm = fsm_from_json(await request.json())
        if fsm.task_name != task_name:
            raise InputError("task_name in body does not match the URL")
        with state.lock:
            state.fsms[task_name] = fsm
        return fsm_to_json(fsm)

    @app.post("/fsms/scaffold", status_code=201)
    async def scaffold_fsm(request: Request):
        state = _state(request)
        body = await request.json()
        workflow_id = str(body.get("workflow_id", ""))
        with state.lock:
            workflow = state.workflows.get(workflow_id)
        if workflow is None:
            return _not_found("workflow", workflow_id)
        fsm = scaffold_from_workflow(
            workflow,
            task_name=body.get("task_name"),
            debounce=int(body.get("debounce", 3)),
        )
        with state.lock:
            if fsm.task_name in state.fsms:
                raise ConflictError(f"task model {fsm.task_name!r} already exists")
            state.fsms[fsm.task_name] = fsm
        return fsm_to_json(fsm)

    @app.post("/fsms/{task_name}/validate")
    async def validate_stored_fsm(task_name: str, request: Request):
        state = _state(request)
        with state.lock:
            fsm = state.fsms.get(task_name)
        if fsm is None:
            return _not_found("task model", task_name)
        return {
            "diagnostics": [
                {"level": d.level, "message": d.message, "state": d.state}
                for d in validate_fsm(fsm)
            ]
        }

    @app.post("/fsms/{task_name}/compile")
    async def compile_stored_fsm(task_name: str, request: Request):
        state = _state(request)
        with state.lock:
            fsm = state.fsms.get(task_name)
        if fsm is None:
            return _not_found("task model", task_name)
        document = compile_fsm(fsm)
        with state.lock:
            state.packages[document["task_name"]] = document
        return document

    @app.get("/packages")
    async def list_packages(request: Request):
        state = _state(request)
        with state.lock:
            return {
                "packages": [
                    {"task_name": name, "checksum": state.packages[name]["checksum"]}
                    for name in sorted(state.packages)
                ]
            }

    @app.get("/packages/{task_name}")
    async def get_package(task_name: str, request: Request):
        state = _state(request)
        with state.lock:
            document = state.packages.get(task_name)
        if document is None:
            return _not_found("package", task_name)
        return document

    @app.post("/packages", status_code=201)
    async def register_package(request: Request):
        state = _state(request)
        document = check_package(await request.json())
        with state.lock:
            state.packages[document["task_name"]] = document
        return {"task_name": document["task_name"], "checksum": document["checksum"]}

    # -- simulations -----------------------------------------------------

    @app.post("/simulations")
    async def run_simulation(request: Request):
        state = _state(request)
        body = await request.json()
        task_name = str(body.get("task_name", ""))
        with state.lock:
            document = state.packages.get(task_name)
        if document is None:
            return _not_found("package", task_name)
        frames_json = body.get("frames")
        if not isinstance(frames_json, list):
            raise InputError("simulation body needs a frames list of box lists")
        frames = [
            [box_from_json(b, context=f"frames[{i}][{j}]") for j, b in enumerate(boxes)]
            for i, boxes in enumerate(frames_json)
        ]
        statuses = simulate(document, frames)
        return {
            "task_name": task_name,
            "statuses": [_status_json(s) for s in statuses],
            "final_state": statuses[-1].state if statuses else document["start_state"],
            "done": statuses[-1].done if statuses else False,
        }


def _project_json(project: Project, frame_count: int) -> dict:
    return {
        "project_id": project.project_id,
        "name": project.name,
        "frames_dir": str(project.frames_dir),
        "frame_count": frame_count,
        "revision": project.annotations.revision,
    }


async def _has_body(request: Request) -> bool:
    body = await request.body()
    return bool(body)


# -- websocket side ------------------------------------------------------


class _WsSession:
    """Per-connection protocol state: reader-side checks plus a worker."""

    def __init__(self, websocket: WebSocket, state: AppState):
        self.websocket = websocket
        self.state = state
        self.session_id: Optional[str] = None
        self.engine: Optional[Engine] = None
        self.tokens_in_flight = 0
        self.last_client_sequence: Optional[int] = None
        self.server_sequence = 0
        self.send_lock = asyncio.Lock()
        self.queue: asyncio.Queue = asyncio.Queue()
        self.worker: Optional[asyncio.Task] = None

    async def send(self, msg_type: str, payload: dict) -> None:
        async with self.send_lock:
            message = make_message(
                msg_type, self.session_id or "unset", self.server_sequence, payload
            )
            self.server_sequence += 1
            await self.websocket.send_text(dump_message(message))

    async def send_error(self, code: str, message: str, for_sequence=None) -> None:
        payload = {"code": code, "message": message}
        if for_sequence is not None:
            payload["for_sequence"] = for_sequence
        await self.send(ERROR, payload)

    async def handle_text(self, text: str) -> None:
        try:
            record = parse_message(text)
        except ProtocolError as exc:
            await self.send_error(exc.code, str(exc))
            return
        sequence = record["sequence"]
        if self.last_client_sequence is not None and sequence <= self.last_client_sequence:
            await self.send_error(
                ERR_SEQUENCE,
                f"sequence {sequence} is not greater than {self.last_client_sequence}",
                for_sequence=sequence,
            )
            return
        self.last_client_sequence = sequence
        msg_type = record["type"]
        if msg_type == HELLO:
            await self.handle_hello(record)
        elif msg_type in (FRAME, DETECTIONS):
            await self.handle_input(record)
        else:
            await self.send_error(
                ERR_BAD_MESSAGE, f"clients do not send {msg_type!r}", for_sequence=sequence
            )

    async def handle_hello(self, record: dict) -> None:
        sequence = record["sequence"]
        payload = record["payload"]
        if self.engine is not None:
            await self.send_error(
                ERR_ALREADY_STARTED, "session already started", for_sequence=sequence
            )
            return
        if payload.get("protocol_version") != PROTOCOL_VERSION:
            await self.send_error(
                ERR_VERSION,
                f"protocol_version must be {PROTOCOL_VERSION}",
                for_sequence=sequence,
            )
            return
        task_name = payload.get("task_name")
        with self.state.lock:
            document = self.state.packages.get(task_name)
        if document is None:
            await self.send_error(
                ERR_UNKNOWN_TASK, f"no package for task {task_name!r}", for_sequence=sequence
            )
            return
        self.session_id = record["session_id"]
        self.engine = Engine(document)
        self.worker = asyncio.create_task(self.run_worker())
        await self.send(
            ACK,
            {
                "for_sequence": sequence,
                "protocol_version": PROTOCOL_VERSION,
                "task_name": task_name,
                "tokens": self.state.config.max_tokens,
                "state": self.engine.current,
                "guidance": self.engine.guidance,
            },
        )

    async def handle_input(self, record: dict) -> None:
        sequence = record["sequence"]
        if self.engine is None:
            await self.send_error(
                ERR_NOT_READY, "send hello before frames", for_sequence=sequence
            )
            return
        if record["session_id"] != self.session_id:
            await self.send_error(
                ERR_BAD_MESSAGE,
                f"session_id {record['session_id']!r} does not match {self.session_id!r}",
                for_sequence=sequence,
            )
            return
        if self.tokens_in_flight >= self.state.config.max_tokens:
            await self.send_error(
                ERR_FLOW_CONTROL,
                f"token budget of {self.state.config.max_tokens} exhausted; frame dropped",
                for_sequence=sequence,
            )
            return
        self.tokens_in_flight += 1
        await self.queue.put(record)

    async def run_worker(self) -> None:
        while True:
            record = await self.queue.get()
            try:
                if self.state.config.frame_delay > 0:
                    await asyncio.sleep(self.state.config.frame_delay)
                await self.process_input(record)
            except WebSocketDisconnect:
                return
            except Exception as exc:
                logger.exception("worker failed on sequence %s", record.get("sequence"))
                try:
                    await self.send_error(
                        ERR_INTERNAL, str(exc), for_sequence=record.get("sequence")
                    )
                except Exception:
                    return
            finally:
                self.tokens_in_flight -= 1

    async def process_input(self, record: dict) -> None:
        sequence = record["sequence"]
        payload = record["payload"]
        if record["type"] == DETECTIONS:
            boxes = [
                box_from_json(b, context=f"detections[{i}]")
                for i, b in enumerate(payload.get("boxes", []))
            ]
        else:
            detector = self.state.config.detector
            if detector is None:
                await self.send_error(
                    ERR_NO_DETECTOR,
                    "this deployment has no detector; send detections instead",
                    for_sequence=sequence,
                )
                return
            image_b64 = payload.get("image_b64")
            if not isinstance(image_b64, str):
                raise ProtocolError("frame payload needs image_b64", code=ERR_BAD_MESSAGE)
            raw = base64.b64decode(image_b64)
            with Image.open(io.BytesIO(raw)) as img:
                image = np.asarray(img.convert("RGB"))
            boxes = detector(image)
        status = self.engine.step(boxes)
        await self.send(
            GUIDANCE,
            {
                "for_sequence": sequence,
                "state": status.state,
                "guidance": status.guidance,
                "changed": status.changed,
                "done": status.done,
            },
        )

    async def shutdown(self) -> None:
        if self.worker is not None:
            self.worker.cancel()
            try:
                await self.worker
            except (asyncio.CancelledError, Exception):
                pass


def _register_ws_route(app: FastAPI) -> None:
    @app.websocket("/ws")
    async def guidance_socket(websocket: WebSocket):
        await websocket.accept()
        session = _WsSession(websocket, websocket.app.state.guidekit)
        try:
            while True:
                text = await websocket.receive_text()
                await session.handle_text(text)
        except WebSocketDisconnect:
            pass
        finally:
            await session.shutdown()


def serve(
    config: Optional[ServiceConfig] = None,
    host: str = "127.0.0.1",
    port: int = 8750,
    log_level: str = "info",
) -> None:
    """Run the service until interrupted (blocking)."""
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level=log_level)
