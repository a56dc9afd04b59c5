import { Api, ApiError } from "./api.js";
import {
  buildSpans,
  frameExtent,
  frameStep,
  nextStep,
  objectsAt,
  prevStep,
  stepAt,
  type TimelineState,
} from "./timeline.js";
import { WorkflowEditor } from "./workflowEditor.js";
import { FsmEditor } from "./fsmGraph.js";
import type { FsmJson } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing #${id}`);
  return element as T;
};

const NODE_FILL: Record<string, string> = {
  white: "#ffffff",
  green: "#2e9e44",
  red: "#d23f31",
};

let api = new Api("");
let editor = new WorkflowEditor(api);
let timeline: TimelineState | null = null;
let fsmEditor: FsmEditor | null = null;
let selectedState: string | null = null;
let stateClipboard = "";

function flash(cue: string | null): void {
  const element = $("nav-cue");
  element.textContent = cue === "at-start" ? "at first step" : cue === "at-end" ? "at last step" : "";
  if (cue) setTimeout(() => (element.textContent = ""), 1200);
}

function showBanner(): void {
  const banner = $("banner");
  banner.textContent = editor.banner ?? "";
  banner.style.display = editor.banner ? "block" : "none";
  ($("reload-button") as HTMLButtonElement).style.display =
    editor.status === "stale" ? "inline-block" : "none";
}

function renderTimeline(): void {
  if (!editor.workflow || !timeline) return;
  timeline = { workflow: editor.workflow, currentFrame: timeline.currentFrame };
  const workflow = editor.workflow;
  const extent = Math.max(1, frameExtent(workflow));
  const bar = $("timeline-bar");
  bar.innerHTML = "";
  for (const span of buildSpans(workflow)) {
    const div = document.createElement("div");
    div.className = "span";
    div.style.left = `${(100 * span.startFrame) / extent}%`;
    div.style.width = `${(100 * (span.endFrame - span.startFrame + 1)) / extent}%`;
    div.style.background = span.color;
    div.title = `step ${span.stepId}: ${span.startFrame}..${span.endFrame}`;
    div.onclick = () => {
      timeline = { workflow, currentFrame: span.startFrame };
      renderTimeline();
    };
    bar.appendChild(div);
  }
  const playhead = document.createElement("div");
  playhead.className = "playhead";
  playhead.style.left = `${(100 * timeline.currentFrame) / extent}%`;
  bar.appendChild(playhead);

  $("frame-label").textContent =
    `frame ${timeline.currentFrame} / ${extent}  ·  revision ${workflow.revision}`;
  const thumb = $("thumb") as HTMLImageElement;
  thumb.src = api.frameUrl(workflow.workflow_id, timeline.currentFrame);

  const step = stepAt(workflow, timeline.currentFrame);
  $("step-label").textContent = step
    ? `step ${step.step_id} (${step.start_frame}..${step.end_frame})` +
      (step.completion_object ? `  ·  completion: ${step.completion_object}` : "")
    : "between steps";
  const list = $("object-list");
  list.innerHTML = "";
  for (const name of objectsAt(workflow, timeline.currentFrame)) {
    const item = document.createElement("li");
    item.textContent = name;
    list.appendChild(item);
  }
  showBanner();
}

function nav(move: (state: TimelineState) => { state: TimelineState; cue: string | null }): void {
  if (!timeline) return;
  const result = move(timeline);
  timeline = result.state;
  flash(result.cue);
  renderTimeline();
}

async function guard(action: () => Promise<unknown>): Promise<void> {
  try {
    await action();
  } catch (error) {
    if (!(error instanceof ApiError)) {
      editor.banner = String(error);
    }
    showBanner();
  }
}

function currentStepId(): number | null {
  if (!editor.workflow || !timeline) return null;
  const step = stepAt(editor.workflow, timeline.currentFrame);
  return step ? step.step_id : null;
}

// -- FSM panel ---------------------------------------------------------

function renderFsm(): void {
  const svg = $("fsm-svg");
  svg.innerHTML = "";
  const details = $("state-details");
  if (!fsmEditor) {
    details.textContent = "";
    return;
  }
  const graph = fsmEditor.graph;
  $("fsm-label").textContent =
    `${fsmEditor.fsm.task_name}  ·  ${graph.debounceBadge}` + (fsmEditor.dirty ? "  ·  unsaved" : "");
  const gap = 130;
  const positions = new Map<string, number>();
  graph.nodes.forEach((node, index) => positions.set(node.name, 60 + index * gap));
  const ns = "http://www.w3.org/2000/svg";
  svg.setAttribute("width", String(60 + graph.nodes.length * gap));
  for (const edge of graph.edges) {
    const from = positions.get(edge.from) ?? 0;
    const to = positions.get(edge.to) ?? 0;
    const path = document.createElementNS(ns, "path");
    const lift = edge.from === edge.to ? 46 : Math.min(44, 18 + Math.abs(to - from) / 8);
    path.setAttribute(
      "d",
      `M ${from} 60 C ${from} ${60 - lift}, ${to} ${60 - lift}, ${to} 60`,
    );
    path.setAttribute("class", "edge");
    svg.appendChild(path);
    const badge = document.createElementNS(ns, "text");
    badge.setAttribute("x", String((from + to) / 2));
    badge.setAttribute("y", String(60 - lift + 4));
    badge.setAttribute("class", "badge");
    badge.textContent = `${edge.priorityBadge} ${edge.label}`;
    svg.appendChild(badge);
  }
  for (const node of graph.nodes) {
    const x = positions.get(node.name) ?? 0;
    const circle = document.createElementNS(ns, "circle");
    circle.setAttribute("cx", String(x));
    circle.setAttribute("cy", "60");
    circle.setAttribute("r", "24");
    circle.setAttribute("fill", NODE_FILL[node.color]);
    circle.setAttribute("class", `node ${node.name === selectedState ? "selected" : ""}`);
    circle.addEventListener("click", () => {
      selectedState = node.name;
      renderFsm();
    });
    svg.appendChild(circle);
    const label = document.createElementNS(ns, "text");
    label.setAttribute("x", String(x));
    label.setAttribute("y", "100");
    label.setAttribute("class", "node-label");
    label.textContent = node.name;
    svg.appendChild(label);
  }
  const node = graph.nodes.find((n) => n.name === selectedState);
  details.textContent = node ? `${node.name} (${node.kind})` : "select a state";
  ($("guidance-input") as HTMLTextAreaElement).value = node ? node.guidance : "";
}

function wire(): void {
  $("connect-button").onclick = () => {
    api = new Api(($("base-url") as HTMLInputElement).value.replace(/\/$/, ""));
    editor = new WorkflowEditor(api);
    editor.onChange(renderTimeline);
    void guard(async () => {
      await api.health();
      $("connect-label").textContent = "connected";
    });
  };
  $("load-workflow").onclick = () =>
    guard(async () => {
      const workflow = await editor.load(($("workflow-id") as HTMLInputElement).value);
      timeline = { workflow, currentFrame: workflow.steps[0]?.start_frame ?? 0 };
      renderTimeline();
    });
  $("reload-button").onclick = () =>
    guard(async () => {
      await editor.reload();
      renderTimeline();
    });
  $("prev-step").onclick = () => nav(prevStep);
  $("next-step").onclick = () => nav(nextStep);
  $("frame-back").onclick = () => nav((s) => frameStep(s, -1));
  $("frame-forward").onclick = () => nav((s) => frameStep(s, 1));
  $("split-button").onclick = () =>
    guard(async () => {
      const stepId = currentStepId();
      if (stepId === null || !timeline) return;
      await editor.split(stepId, timeline.currentFrame);
    });
  $("merge-button").onclick = () =>
    guard(async () => {
      const stepId = currentStepId();
      if (stepId !== null) await editor.merge(stepId);
    });
  $("add-object").onclick = () =>
    guard(async () => {
      const stepId = currentStepId();
      const name = ($("object-name") as HTMLInputElement).value.trim();
      if (stepId !== null && name) await editor.editObjects(stepId, { add: [name] });
    });
  $("remove-object").onclick = () =>
    guard(async () => {
      const stepId = currentStepId();
      const name = ($("object-name") as HTMLInputElement).value.trim();
      if (stepId !== null && name) await editor.editObjects(stepId, { remove: [name] });
    });
  $("set-completion").onclick = () =>
    guard(async () => {
      const stepId = currentStepId();
      const name = ($("object-name") as HTMLInputElement).value.trim();
      if (stepId !== null) await editor.setCompletion(stepId, name || null);
    });

  $("load-fsm").onclick = () =>
    guard(async () => {
      const fsm = await api.getFsm(($("task-name") as HTMLInputElement).value);
      fsmEditor = new FsmEditor(fsm);
      selectedState = null;
      $("compile-result").innerHTML = "";
      renderFsm();
    });
  $("scaffold-fsm").onclick = () =>
    guard(async () => {
      if (!editor.workflow) return;
      const fsm = await api.scaffoldFsm({
        workflow_id: editor.workflow.workflow_id,
        task_name: ($("task-name") as HTMLInputElement).value || undefined,
      });
      fsmEditor = new FsmEditor(fsm);
      renderFsm();
    });
  $("guidance-input").onchange = () => {
    if (fsmEditor && selectedState) {
      fsmEditor.setGuidance(selectedState, ($("guidance-input") as HTMLTextAreaElement).value);
      renderFsm();
    }
  };
  $("copy-state").onclick = () => {
    if (fsmEditor && selectedState) stateClipboard = fsmEditor.copyState(selectedState);
  };
  $("paste-state").onclick = () => {
    if (fsmEditor && stateClipboard) {
      selectedState = fsmEditor.pasteState(stateClipboard);
      renderFsm();
    }
  };
  $("save-fsm").onclick = () =>
    guard(async () => {
      if (!fsmEditor) return;
      fsmEditor.fsm = await api.putFsm(fsmEditor.fsm);
      fsmEditor.markSaved();
      renderFsm();
    });
  $("validate-fsm").onclick = () =>
    guard(async () => {
      if (!fsmEditor) return;
      const result = await api.validateFsm(fsmEditor.fsm.task_name);
      const list = $("diagnostics");
      list.innerHTML = "";
      for (const diagnostic of result.diagnostics) {
        const item = document.createElement("li");
        item.className = diagnostic.level;
        item.textContent =
          (diagnostic.state ? `[${diagnostic.state}] ` : "") + diagnostic.message;
        list.appendChild(item);
      }
      if (!result.diagnostics.length) list.innerHTML = "<li>clean</li>";
    });
  $("compile-fsm").onclick = () =>
    guard(async () => {
      if (!fsmEditor) return;
      const target = $("compile-result");
      try {
        const pkg = await api.compileFsm(fsmEditor.fsm.task_name);
        const blob = new Blob([JSON.stringify(pkg, null, 2)], { type: "application/json" });
        const link = document.createElement("a");
        link.href = URL.createObjectURL(blob);
        link.download = `${pkg.task_name}.package.json`;
        link.textContent = `download package (${pkg.checksum.slice(0, 12)}...)`;
        target.innerHTML = "";
        target.appendChild(link);
      } catch (error) {
        // compile errors arrive as diagnostics; pin them to the panel
        if (error instanceof ApiError && error.diagnostics.length) {
          const list = $("diagnostics");
          list.innerHTML = "";
          for (const line of error.diagnostics) {
            const item = document.createElement("li");
            item.className = "error";
            item.textContent = line;
            list.appendChild(item);
          }
        }
        throw error;
      }
    });
  $("simulate-button").onclick = () =>
    guard(async () => {
      if (!fsmEditor) return;
      const lines = ($("simulate-input") as HTMLTextAreaElement).value
        .split("\n")
        .map((line) => line.trim())
        .filter(Boolean);
      const frames = lines.map((line) => JSON.parse(line) as unknown[]);
      const result = await api.simulate(fsmEditor.fsm.task_name, frames);
      const list = $("simulate-result");
      list.innerHTML = "";
      result.statuses.forEach((status, index) => {
        if (!status.changed) return;
        const item = document.createElement("li");
        item.textContent = `frame ${index}: -> ${status.state}: ${status.guidance}`;
        list.appendChild(item);
      });
      const item = document.createElement("li");
      item.textContent = `final state ${result.final_state} (done=${result.done})`;
      list.appendChild(item);
    });

  editor.onChange(renderTimeline);
}

wire();
