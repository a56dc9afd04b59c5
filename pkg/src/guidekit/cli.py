"""Command line interface.

Exit codes: 0 on success, 1 when the toolchain reports a domain error
(bad trace, failed validation, checksum mismatch, ...), 2 on usage
errors such as unknown flags or missing arguments.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from . import demo as demo_data
from . import workflow as wf
from .association import associate_trace
from .engine import simulate as run_simulation
from .errors import GuidekitError
from .fsm import errors_of, load_fsm, save_fsm, scaffold_from_workflow, validate_fsm
from .geometry import BoundingBox
from .imaging import ImageDirFrames, load_image, save_image
from .labeling import AnnotationSet, PropagationConfig, load_annotations, save_annotations
from .dataset import DedupConfig, dedupe_frames, export_dataset
from .package import compile_fsm, load_package, save_package
from .plugin import run_plugin_loop
from .segmentation import SegmentationConfig, bda, segment_trace
from .service import ServiceConfig, serve
from .template_detector import load_detector, save_detector, train_baseline
from .trace import box_from_json, box_to_json, load_trace, save_trace


def domain_errors(fn):
    """Map toolchain errors onto exit code 1 with a clean message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GuidekitError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def parse_box(text: str) -> BoundingBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise click.BadParameter(f"box must be x_min,y_min,x_max,y_max, got {text!r}")
    try:
        x0, y0, x1, y1 = (int(p) for p in parts)
    except ValueError as exc:
        raise click.BadParameter(f"box coordinates must be integers: {text!r}") from exc
    return BoundingBox(x_min=x0, y_min=y0, x_max=x1, y_max=y1)


def segmentation_options(fn):
    fn = click.option("--window-size", type=int, default=19, show_default=True)(fn)
    fn = click.option("--threshold", type=float, default=0.5, show_default=True)(fn)
    fn = click.option("--min-step-frames", type=int, default=12, show_default=True)(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Authoring toolchain for wearable step-by-step task guidance."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


# -- segmentation and association ---------------------------------------


@main.command()
@click.argument("trace_path", type=click.Path(exists=True, dir_okay=False))
@segmentation_options
@click.option("--json", "as_json", is_flag=True, help="Emit machine-readable JSON.")
@domain_errors
def segment(trace_path, window_size, threshold, min_step_frames, as_json):
    """Detect working steps in a detection trace."""
    frames = load_trace(trace_path)
    config = SegmentationConfig(
        window_size=window_size, threshold=threshold, min_step_frames=min_step_frames
    )
    segments = segment_trace(frames, config)
    if as_json:
        click.echo(
            json.dumps(
                [
                    {"step_id": s.step_id, "start_frame": s.start_frame, "end_frame": s.end_frame}
                    for s in segments
                ]
            )
        )
        return
    for s in segments:
        click.echo(f"step {s.step_id}: frames {s.start_frame}..{s.end_frame} ({s.frame_count})")
    click.echo(f"{len(segments)} step(s) in {len(frames)} frames")


@main.command()
@click.argument("trace_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Write per-frame assignments as JSONL.")
@domain_errors
def associate(trace_path, out):
    """Track object identities through a detection trace."""
    frames = load_trace(trace_path)
    result = associate_trace(frames)
    first = result.first_interactions()
    for object_id in sorted(result.objects):
        entry = result.objects[object_id]
        touched = first.get(object_id)
        touched_text = f"first touched at frame {touched}" if touched is not None else "never touched"
        click.echo(f"object {object_id} ({entry.label or 'unlabeled'}): {touched_text}")
    if out:
        with open(out, "w") as fh:
            for frame in result.frames:
                fh.write(
                    json.dumps(
                        {
                            "frame_index": frame.frame_index,
                            "o_boxes": [
                                dict(box_to_json(a.box), object_id=a.object_id, source=a.source)
                                for a in frame.o_boxes
                            ],
                        }
                    )
                    + "\n"
                )
        click.echo(f"wrote per-frame assignments to {out}")


@main.command("bda")
@click.argument("trace_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("reference_path", type=click.Path(exists=True, dir_okay=False))
@segmentation_options
@domain_errors
def bda_command(trace_path, reference_path, window_size, threshold, min_step_frames):
    """Score detected step boundaries against a reference step list.

    REFERENCE_PATH is a JSON list of {step_id, start_frame, end_frame}.
    """
    from .segmentation import StepSegment

    frames = load_trace(trace_path)
    config = SegmentationConfig(
        window_size=window_size, threshold=threshold, min_step_frames=min_step_frames
    )
    detected = segment_trace(frames, config)
    reference_json = json.loads(Path(reference_path).read_text())
    reference = [
        StepSegment(int(r["start_frame"]), int(r["end_frame"]), int(r["step_id"]))
        for r in reference_json
    ]
    click.echo(f"boundary agreement: {bda(detected, reference):.4f}")


# -- workflow ------------------------------------------------------------


@main.group()
def workflow():
    """Build and edit step workflows."""


@workflow.command("build")
@click.argument("trace_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--workflow-id", required=True)
@click.option("--fps", type=float, default=30.0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@segmentation_options
@domain_errors
def workflow_build(trace_path, workflow_id, fps, out, window_size, threshold, min_step_frames):
    """Segment a trace, associate objects, and write a draft workflow."""
    frames = load_trace(trace_path)
    config = SegmentationConfig(
        window_size=window_size, threshold=threshold, min_step_frames=min_step_frames
    )
    segments = segment_trace(frames, config)
    result = associate_trace(frames)
    built = wf.from_associations(
        segments, result, workflow_id=workflow_id, video_ref=str(trace_path), fps=fps
    )
    wf.save_workflow(built, out)
    click.echo(f"wrote workflow {workflow_id!r} with {len(built.steps)} step(s) to {out}")


@workflow.command("show")
@click.argument("workflow_path", type=click.Path(exists=True, dir_okay=False))
@domain_errors
def workflow_show(workflow_path):
    loaded = wf.load_workflow(workflow_path)
    click.echo(f"workflow {loaded.workflow_id!r} (revision {loaded.revision}, {loaded.fps} fps)")
    for step in loaded.steps:
        objects = ", ".join(step.objects) or "-"
        completion = step.completion_object or "-"
        click.echo(
            f"  step {step.step_id}: frames {step.start_frame}..{step.end_frame}"
            f" objects [{objects}] completion {completion}"
        )


def _apply_workflow_edit(workflow_path, out, edit_fn):
    loaded = wf.load_workflow(workflow_path)
    updated = edit_fn(loaded)
    wf.save_workflow(updated, out or workflow_path)
    click.echo(f"revision {loaded.revision} -> {updated.revision}")


@workflow.command("split")
@click.argument("workflow_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("step_id", type=int)
@click.argument("frame", type=int)
@click.option("--out", type=click.Path(dir_okay=False), help="Write elsewhere instead of in place.")
@domain_errors
def workflow_split(workflow_path, step_id, frame, out):
    """Split STEP_ID so its second half starts at FRAME."""
    _apply_workflow_edit(workflow_path, out, lambda w: wf.split_step(w, step_id, frame))


@workflow.command("merge")
@click.argument("workflow_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("step_id", type=int)
@click.option("--out", type=click.Path(dir_okay=False))
@domain_errors
def workflow_merge(workflow_path, step_id, out):
    """Merge STEP_ID with the step after it."""
    _apply_workflow_edit(workflow_path, out, lambda w: wf.merge_steps(w, step_id))


@workflow.command("objects")
@click.argument("workflow_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("step_id", type=int)
@click.option("--add", multiple=True)
@click.option("--remove", multiple=True)
@click.option("--out", type=click.Path(dir_okay=False))
@domain_errors
def workflow_objects(workflow_path, step_id, add, remove, out):
    """Add or remove objects on one step."""
    _apply_workflow_edit(
        workflow_path, out, lambda w: wf.edit_objects(w, step_id, add=add, remove=remove)
    )


@workflow.command("completion")
@click.argument("workflow_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("step_id", type=int)
@click.argument("object_name", required=False)
@click.option("--out", type=click.Path(dir_okay=False))
@domain_errors
def workflow_completion(workflow_path, step_id, object_name, out):
    """Set (or clear, when omitted) a step's completion object."""
    _apply_workflow_edit(
        workflow_path, out, lambda w: wf.set_completion(w, step_id, object_name)
    )


# -- labeling ------------------------------------------------------------


@main.group()
def label():
    """Keyframe labels and template propagation."""


def _load_or_new_annotations(path, frames_dir):
    if Path(path).exists():
        return load_annotations(path)
    return AnnotationSet(video_ref=str(frames_dir or ""))


@label.command("add")
@click.argument("annotations_path", type=click.Path(dir_okay=False))
@click.option("--frames-dir", type=click.Path(file_okay=False), help="Recorded for new files.")
@click.option("--class", "class_name", required=True)
@click.option("--frame", type=int, required=True)
@click.option("--box", required=True, help="x_min,y_min,x_max,y_max")
@domain_errors
def label_add(annotations_path, frames_dir, class_name, frame, box):
    """Start a new labeled track with one keyframe."""
    annotations = _load_or_new_annotations(annotations_path, frames_dir)
    track_id = annotations.add_track(class_name, frame, parse_box(box))
    save_annotations(annotations, annotations_path)
    click.echo(f"track {track_id} ({class_name}) keyframe at frame {frame}")


@label.command("keyframe")
@click.argument("annotations_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("track_id", type=int)
@click.option("--frame", type=int, required=True)
@click.option("--box", required=True, help="x_min,y_min,x_max,y_max")
@domain_errors
def label_keyframe(annotations_path, track_id, frame, box):
    """Place or move a keyframe on an existing track."""
    annotations = load_annotations(annotations_path)
    annotations.set_keyframe(track_id, frame, parse_box(box))
    save_annotations(annotations, annotations_path)
    click.echo(f"track {track_id} keyframe at frame {frame} (revision {annotations.revision})")


@label.command("propagate")
@click.argument("annotations_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--frames-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--search-radius", type=int, default=16, show_default=True)
@click.option("--stop-threshold", type=float, default=0.6, show_default=True)
@domain_errors
def label_propagate(annotations_path, frames_dir, search_radius, stop_threshold):
    """Propagate keyframe labels through the video."""
    annotations = load_annotations(annotations_path)
    frames = ImageDirFrames(frames_dir)
    written = annotations.propagate_all(
        frames, PropagationConfig(search_radius=search_radius, stop_threshold=stop_threshold)
    )
    save_annotations(annotations, annotations_path)
    click.echo(f"propagated {written} box(es); revision {annotations.revision}")


@label.command("show")
@click.argument("annotations_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--frame", type=int, help="Limit to one frame.")
@domain_errors
def label_show(annotations_path, frame):
    annotations = load_annotations(annotations_path)
    entries = annotations.labels_at(frame) if frame is not None else annotations.all_labels()
    for entry in entries:
        click.echo(
            f"frame {entry.frame_index} track {entry.track_id} {entry.class_name}"
            f" [{entry.box.x_min},{entry.box.y_min},{entry.box.x_max},{entry.box.y_max}]"
            f" {entry.source} score {entry.score:.3f}"
        )
    click.echo(f"{len(entries)} label(s), revision {annotations.revision}")


# -- datasets and detectors ---------------------------------------------


@main.group()
def dataset():
    """Dataset preparation."""


@dataset.command("dedupe")
@click.option("--frames-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--downsample", type=int, default=64, show_default=True)
@click.option("--diff-threshold", type=float, default=4.0, show_default=True)
@domain_errors
def dataset_dedupe(frames_dir, downsample, diff_threshold):
    """List the frames that survive near-duplicate removal."""
    frames = ImageDirFrames(frames_dir)
    kept = dedupe_frames(frames, DedupConfig(downsample=downsample, threshold=diff_threshold))
    for index in kept:
        click.echo(frames.paths[index].name)
    click.echo(f"kept {len(kept)} of {len(frames)} frames")


@dataset.command("export")
@click.argument("annotations_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--frames-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--negatives", type=int, default=0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@domain_errors
def dataset_export(annotations_path, frames_dir, out, negatives, seed):
    """Export labeled frames, annotations, and mined negatives."""
    annotations = load_annotations(annotations_path)
    frames = ImageDirFrames(frames_dir)
    manifest = export_dataset(
        list(frames), annotations, out, negatives_per_frame=negatives, seed=seed
    )
    click.echo(json.dumps(manifest, indent=2))


@main.group()
def detector():
    """The built-in template-matching detector."""


@detector.command("train")
@click.argument("annotations_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--frames-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--score-threshold", type=float, default=0.8, show_default=True)
@domain_errors
def detector_train(annotations_path, frames_dir, out, score_threshold):
    """Build a detector from keyframe crops."""
    annotations = load_annotations(annotations_path)
    frames = ImageDirFrames(frames_dir)
    trained = train_baseline(list(frames), annotations, score_threshold=score_threshold)
    save_detector(trained, out)
    click.echo(
        f"saved detector with {len(trained.templates)} template(s) for "
        f"classes {trained.classes} to {out}"
    )


@detector.command("detect")
@click.argument("detector_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("image_path", type=click.Path(exists=True, dir_okay=False))
@domain_errors
def detector_detect(detector_dir, image_path):
    """Run the detector on one image."""
    loaded = load_detector(detector_dir)
    boxes = loaded.detect(load_image(image_path))
    for box in boxes:
        click.echo(json.dumps(box_to_json(box)))
    if not boxes:
        click.echo("no detections", err=True)


@detector.command("plugin")
@click.argument("detector_dir", type=click.Path(exists=True, file_okay=False))
@domain_errors
def detector_plugin(detector_dir):
    """Serve the detector over the stdio plugin protocol."""
    loaded = load_detector(detector_dir)
    run_plugin_loop(loaded.detect, loaded.classes)


# -- task models ---------------------------------------------------------


@main.group()
def fsm():
    """Task models: scaffold, validate, compile."""


@fsm.command("scaffold")
@click.argument("workflow_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--task-name")
@click.option("--debounce", type=int, default=3, show_default=True)
@domain_errors
def fsm_scaffold(workflow_path, out, task_name, debounce):
    """Draft a linear task model from a workflow."""
    loaded = wf.load_workflow(workflow_path)
    scaffolded = scaffold_from_workflow(loaded, task_name=task_name, debounce=debounce)
    save_fsm(scaffolded, out)
    click.echo(f"scaffolded {len(scaffolded.states)} state(s) to {out}")


@fsm.command("validate")
@click.argument("fsm_path", type=click.Path(exists=True, dir_okay=False))
@domain_errors
def fsm_validate(fsm_path):
    """Check a task model; exits 1 when it has errors."""
    diagnostics = validate_fsm(load_fsm(fsm_path))
    for diagnostic in diagnostics:
        click.echo(str(diagnostic))
    problems = errors_of(diagnostics)
    if problems:
        raise click.ClickException(f"{len(problems)} error(s)")
    click.echo("ok" if not diagnostics else f"ok with {len(diagnostics)} warning(s)")


@fsm.command("compile")
@click.argument("fsm_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), required=True)
@domain_errors
def fsm_compile(fsm_path, out):
    """Compile a task model into a runnable package directory."""
    document = compile_fsm(load_fsm(fsm_path))
    save_package(document, out)
    click.echo(f"{document['task_name']} {document['checksum']}")


@main.group()
def package():
    """Compiled task packages."""


@package.command("show")
@click.argument("package_path", type=click.Path(exists=True))
@domain_errors
def package_show(package_path):
    """Verify a package and print its summary."""
    document = load_package(package_path)
    click.echo(f"task {document['task_name']!r} checksum {document['checksum']}")
    click.echo(f"debounce {document['debounce']} classes {document['detector_classes']}")
    for state in document["states"]:
        click.echo(
            f"  {state['kind']:6s} {state['name']}: {len(state.get('transitions', []))} transition(s)"
        )


@main.command()
@click.argument("package_path", type=click.Path(exists=True))
@click.argument("detections_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--quiet", is_flag=True, help="Only print the final state.")
@domain_errors
def simulate(package_path, detections_path, quiet):
    """Replay a detections file (one JSON box array per line) offline."""
    document = load_package(package_path)
    frames = []
    for lineno, line in enumerate(Path(detections_path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        boxes_json = json.loads(line)
        frames.append(
            [box_from_json(b, context=f"line {lineno} box[{i}]") for i, b in enumerate(boxes_json)]
        )
    statuses = run_simulation(document, frames)
    if not quiet:
        for i, status in enumerate(statuses):
            if status.changed:
                click.echo(f"frame {i}: -> {status.state}: {status.guidance}")
    final = statuses[-1] if statuses else None
    state_name = final.state if final else document["start_state"]
    done = final.done if final else False
    click.echo(f"final state {state_name} (done={done})")


# -- service -------------------------------------------------------------


@main.command("serve")
@click.option("--bind", envvar="BIND_ADDR", default="127.0.0.1:8750", show_default=True,
              help="host:port to listen on (env BIND_ADDR).")
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False),
              help="Root for project frame directories and exports.")
@click.option("--package-dir", envvar="PACKAGE_DIR", type=click.Path(exists=True, file_okay=False),
              help="Directory of compiled packages to register (env PACKAGE_DIR).")
@click.option("--max-tokens", envvar="MAX_TOKENS", type=int, default=2, show_default=True,
              help="Streaming flow-control budget (env MAX_TOKENS).")
@click.option("--frame-delay", type=float, default=0.0, show_default=True,
              help="Artificial seconds of processing latency per input.")
@click.option("--detector-plugin", envvar="DETECTOR_PLUGIN",
              help="Command for a stdio detector plugin (env DETECTOR_PLUGIN).")
@domain_errors
def serve_command(bind, data_dir, package_dir, max_tokens, frame_delay, detector_plugin):
    """Run the authoring and guidance service."""
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise click.BadParameter(f"--bind must look like host:port, got {bind!r}")
    config = ServiceConfig(
        max_tokens=max_tokens,
        frame_delay=frame_delay,
        data_dir=Path(data_dir) if data_dir else None,
        package_dir=Path(package_dir) if package_dir else None,
        detector_plugin=detector_plugin,
    )
    serve(config, host=host, port=int(port))


# -- demo data -----------------------------------------------------------


@main.group()
def demo():
    """Generate small sample inputs to try the toolchain on."""


@demo.command("trace")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--reference", type=click.Path(dir_okay=False),
              help="Also write the reference step list as JSON.")
@domain_errors
def demo_trace(out, reference):
    """Write the six-step assembly detection trace."""
    frames, segments = demo_data.assembly_trace()
    save_trace(frames, out)
    click.echo(f"wrote {len(frames)} frames to {out}")
    if reference:
        Path(reference).write_text(
            json.dumps(
                [
                    {"step_id": s.step_id, "start_frame": s.start_frame, "end_frame": s.end_frame}
                    for s in segments
                ]
            )
            + "\n"
        )
        click.echo(f"wrote reference steps to {reference}")


@demo.command("sandwich")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@domain_errors
def demo_sandwich(out):
    """Write the sandwich task model, its package, and timelines."""
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    model = demo_data.sandwich_fsm()
    save_fsm(model, root / "sandwich.json")
    document = compile_fsm(model)
    save_package(document, root / "package")
    (root / "timelines").mkdir(exist_ok=True)
    for name, timeline in demo_data.sandwich_timelines().items():
        with open(root / "timelines" / f"{name}.jsonl", "w") as fh:
            for boxes in timeline:
                fh.write(json.dumps([box_to_json(b) for b in boxes]) + "\n")
    click.echo(f"wrote task model, package ({document['checksum'][:12]}...), and timelines to {out}")


@demo.command("video")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--frames", "frame_count", type=int, default=15, show_default=True)
@domain_errors
def demo_video(out, frame_count):
    """Write the translating-square video frames and truth boxes."""
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    frames, boxes = demo_data.square_video(frame_count=frame_count)
    for i, frame in enumerate(frames):
        save_image(frame, root / f"frame_{i:04d}.png")
    (root / "truth.json").write_text(
        json.dumps([box_to_json(b) for b in boxes], indent=2) + "\n"
    )
    click.echo(f"wrote {len(frames)} frames and truth boxes to {out}")


if __name__ == "__main__":
    main()
