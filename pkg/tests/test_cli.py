import json

import pytest
from click.testing import CliRunner

from guidekit.cli import main
from guidekit.package import load_package


@pytest.fixture
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result.output


@pytest.fixture(scope="module")
def demo_dirs(tmp_path_factory):
    """One shared demo environment: trace, reference, sandwich kit, video."""
    runner = CliRunner()
    root = tmp_path_factory.mktemp("demo")
    trace = root / "trace.jsonl"
    reference = root / "reference.json"
    result = runner.invoke(
        main,
        ["demo", "trace", "--out", str(trace), "--reference", str(reference)],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    result = runner.invoke(
        main, ["demo", "sandwich", "--out", str(root / "sandwich")], catch_exceptions=False
    )
    assert result.exit_code == 0, result.output
    result = runner.invoke(
        main, ["demo", "video", "--out", str(root / "video")], catch_exceptions=False
    )
    assert result.exit_code == 0, result.output
    return root


class TestSegmentCommands:
    def test_segment_json(self, runner, demo_dirs):
        output = run_ok(runner, ["segment", str(demo_dirs / "trace.jsonl"), "--json"])
        segments = json.loads(output)
        assert len(segments) == 6
        assert segments[0] == {"step_id": 0, "start_frame": 60, "end_frame": 219}

    def test_segment_human_readable(self, runner, demo_dirs):
        output = run_ok(runner, ["segment", str(demo_dirs / "trace.jsonl")])
        assert "6 step(s) in 1500 frames" in output

    def test_segment_option_overrides(self, runner, demo_dirs):
        output = run_ok(
            runner,
            [
                "segment",
                str(demo_dirs / "trace.jsonl"),
                "--json",
                "--min-step-frames",
                "200",
            ],
        )
        segments = json.loads(output)
        assert all(s["end_frame"] - s["start_frame"] + 1 >= 200 for s in segments)
        assert len(segments) < 6

    def test_bda_score(self, runner, demo_dirs):
        output = run_ok(
            runner,
            ["bda", str(demo_dirs / "trace.jsonl"), str(demo_dirs / "reference.json")],
        )
        assert "boundary agreement:" in output
        score = float(output.strip().rsplit(" ", 1)[1])
        assert 0.85 <= score < 1.0

    def test_associate(self, runner, demo_dirs, tmp_path):
        out = tmp_path / "assoc.jsonl"
        output = run_ok(
            runner, ["associate", str(demo_dirs / "trace.jsonl"), "--out", str(out)]
        )
        assert "object 0 (part-a): first touched at frame" in output
        lines = out.read_text().splitlines()
        assert len(lines) == 1500
        record = json.loads(lines[100])
        assert record["frame_index"] == 100
        assert [b["object_id"] for b in record["o_boxes"]] == [0]

    def test_missing_file_is_usage_error(self, runner):
        result = runner.invoke(main, ["segment", "/does/not/exist.jsonl"])
        assert result.exit_code == 2

    def test_bad_trace_is_domain_error(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("this is not json\n")
        result = runner.invoke(main, ["segment", str(bad)])
        assert result.exit_code == 1
        assert "Error" in result.output


class TestWorkflowCommands:
    @pytest.fixture
    def built(self, runner, demo_dirs, tmp_path):
        path = tmp_path / "wf.json"
        run_ok(
            runner,
            [
                "workflow",
                "build",
                str(demo_dirs / "trace.jsonl"),
                "--workflow-id",
                "assembly",
                "--out",
                str(path),
            ],
        )
        return path

    def test_build_and_show(self, runner, built):
        output = run_ok(runner, ["workflow", "show", str(built)])
        assert "workflow 'assembly' (revision 0, 30.0 fps)" in output
        assert output.count("step ") == 6
        assert "objects [part-a] completion part-a" in output

    def test_split_merge_round_trip(self, runner, built):
        output = run_ok(runner, ["workflow", "split", str(built), "0", "100"])
        assert "revision 0 -> 1" in output
        output = run_ok(runner, ["workflow", "merge", str(built), "0"])
        assert "revision 1 -> 2" in output
        shown = run_ok(runner, ["workflow", "show", str(built)])
        assert shown.count("step ") == 6

    def test_objects_and_completion(self, runner, built):
        run_ok(runner, ["workflow", "objects", str(built), "0", "--add", "jig"])
        run_ok(runner, ["workflow", "completion", str(built), "0", "jig"])
        shown = run_ok(runner, ["workflow", "show", str(built)])
        assert "objects [part-a, jig] completion jig" in shown

    def test_bad_edit_fails_cleanly(self, runner, built):
        result = runner.invoke(main, ["workflow", "split", str(built), "0", "5"])
        assert result.exit_code == 1

    def test_out_leaves_original(self, runner, built, tmp_path):
        copy = tmp_path / "copy.json"
        run_ok(runner, ["workflow", "split", str(built), "0", "100", "--out", str(copy)])
        original = run_ok(runner, ["workflow", "show", str(built)])
        assert "revision 0" in original
        edited = run_ok(runner, ["workflow", "show", str(copy)])
        assert "revision 1" in edited


class TestLabelingCommands:
    @pytest.fixture
    def labeled(self, runner, demo_dirs, tmp_path):
        labels = tmp_path / "labels.json"
        truth = json.loads((demo_dirs / "video" / "truth.json").read_text())
        first = truth[0]
        box_text = f"{first['x_min']},{first['y_min']},{first['x_max']},{first['y_max']}"
        run_ok(
            runner,
            [
                "label",
                "add",
                str(labels),
                "--class",
                "block",
                "--frame",
                "0",
                "--box",
                box_text,
            ],
        )
        return labels

    def test_add_and_show(self, runner, labeled):
        output = run_ok(runner, ["label", "show", str(labeled)])
        assert "track 0 block" in output
        assert "1 label(s), revision 1" in output

    def test_propagate(self, runner, demo_dirs, labeled):
        output = run_ok(
            runner,
            [
                "label",
                "propagate",
                str(labeled),
                "--frames-dir",
                str(demo_dirs / "video"),
            ],
        )
        assert "propagated 14 box(es)" in output
        shown = run_ok(runner, ["label", "show", str(labeled)])
        assert "15 label(s)" in shown

    def test_keyframe_command(self, runner, labeled):
        output = run_ok(
            runner,
            ["label", "keyframe", str(labeled), "0", "--frame", "5", "--box", "0,0,20,20"],
        )
        assert "keyframe at frame 5" in output

    def test_dataset_export_and_detector(self, runner, demo_dirs, labeled, tmp_path):
        run_ok(
            runner,
            ["label", "propagate", str(labeled), "--frames-dir", str(demo_dirs / "video")],
        )
        output = run_ok(
            runner,
            [
                "dataset",
                "export",
                str(labeled),
                "--frames-dir",
                str(demo_dirs / "video"),
                "--out",
                str(tmp_path / "ds"),
                "--negatives",
                "2",
            ],
        )
        manifest = json.loads(output)
        assert manifest["classes"] == ["block"]
        assert manifest["image_count"] == 15

        detector_dir = tmp_path / "det"
        output = run_ok(
            runner,
            [
                "detector",
                "train",
                str(labeled),
                "--frames-dir",
                str(demo_dirs / "video"),
                "--out",
                str(detector_dir),
            ],
        )
        assert "classes ['block']" in output
        detect_out = run_ok(
            runner,
            [
                "detector",
                "detect",
                str(detector_dir),
                str(demo_dirs / "video" / "frame_0000.png"),
            ],
        )
        box = json.loads(detect_out.splitlines()[0])
        assert box["label"] == "block"

    def test_dedupe_command(self, runner, demo_dirs):
        output = run_ok(
            runner, ["dataset", "dedupe", "--frames-dir", str(demo_dirs / "video")]
        )
        assert output.strip().endswith("frames")
        assert "frame_0000.png" in output


class TestTaskModelCommands:
    @pytest.fixture
    def workflow_path(self, runner, demo_dirs, tmp_path):
        path = tmp_path / "wf.json"
        run_ok(
            runner,
            [
                "workflow",
                "build",
                str(demo_dirs / "trace.jsonl"),
                "--workflow-id",
                "assembly",
                "--out",
                str(path),
            ],
        )
        return path

    def test_scaffold_validate_compile(self, runner, workflow_path, tmp_path):
        fsm_path = tmp_path / "task.json"
        run_ok(
            runner,
            ["fsm", "scaffold", str(workflow_path), "--out", str(fsm_path)],
        )
        output = run_ok(runner, ["fsm", "validate", str(fsm_path)])
        assert "ok" in output

        package_dir = tmp_path / "pkg"
        compiled = run_ok(
            runner, ["fsm", "compile", str(fsm_path), "--out", str(package_dir)]
        )
        task_name, checksum = compiled.split()
        assert task_name == "assembly"
        document = load_package(package_dir)
        assert document["checksum"] == checksum

        shown = run_ok(runner, ["package", "show", str(package_dir)])
        assert "task 'assembly'" in shown
        assert "start" in shown and "done" in shown

    def test_validate_broken_fsm_exits_one(self, runner, demo_dirs, tmp_path):
        record = json.loads((demo_dirs / "sandwich" / "sandwich.json").read_text())
        record["states"][0]["transitions"][0]["to"] = "nowhere"
        broken = tmp_path / "broken.json"
        broken.write_text(json.dumps(record))
        result = runner.invoke(main, ["fsm", "validate", str(broken)])
        assert result.exit_code == 1
        assert "nowhere" in result.output

    def test_simulate_timelines(self, runner, demo_dirs):
        package_dir = demo_dirs / "sandwich" / "package"
        for name, final in [
            ("normal", "done"),
            ("tomato-detour", "done"),
            ("cucumber-detour", "done"),
        ]:
            timeline = demo_dirs / "sandwich" / "timelines" / f"{name}.jsonl"
            output = run_ok(runner, ["simulate", str(package_dir), str(timeline)])
            assert f"final state {final} (done=True)" in output

    def test_simulate_shows_detour(self, runner, demo_dirs):
        package_dir = demo_dirs / "sandwich" / "package"
        timeline = demo_dirs / "sandwich" / "timelines" / "tomato-detour.jsonl"
        output = run_ok(runner, ["simulate", str(package_dir), str(timeline)])
        assert "-> tomato-error" in output
        assert "tomato" in output.lower()

    def test_simulate_quiet(self, runner, demo_dirs):
        package_dir = demo_dirs / "sandwich" / "package"
        timeline = demo_dirs / "sandwich" / "timelines" / "normal.jsonl"
        output = run_ok(runner, ["simulate", str(package_dir), str(timeline), "--quiet"])
        assert output.strip() == "final state done (done=True)"

    def test_tampered_package_fails(self, runner, demo_dirs, tmp_path):
        package_dir = demo_dirs / "sandwich" / "package"
        tampered = tmp_path / "package.json"
        tampered.write_text(
            (package_dir / "package.json").read_text().replace("Enjoy", "Destroy")
        )
        result = runner.invoke(
            main,
            [
                "simulate",
                str(tampered),
                str(demo_dirs / "sandwich" / "timelines" / "normal.jsonl"),
            ],
        )
        assert result.exit_code == 1
        assert "checksum" in result.output


class TestServeCommand:
    def test_serve_help_documents_env_vars(self, runner):
        output = run_ok(runner, ["serve", "--help"])
        for name in ("BIND_ADDR", "PACKAGE_DIR", "MAX_TOKENS", "DETECTOR_PLUGIN"):
            assert name in output
