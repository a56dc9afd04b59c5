import type { StepJson, WorkflowJson } from "./types.js";

// Distinct, colorblind-friendly span colors; cycles past six steps.
export const SPAN_PALETTE = [
  "#4e79a7",
  "#f28e2b",
  "#59a14f",
  "#e15759",
  "#b07aa1",
  "#76b7b2",
] as const;

export interface Span {
  stepId: number;
  startFrame: number;
  endFrame: number;
  color: string;
}

export interface TimelineState {
  workflow: WorkflowJson;
  currentFrame: number;
}

// Navigation that would leave the video is a no-op, but the caller gets
// a cue to flash at the user instead of failing silently.
export type NavCue = "at-start" | "at-end" | null;

export interface NavResult {
  state: TimelineState;
  cue: NavCue;
}

export function buildSpans(workflow: WorkflowJson): Span[] {
  return workflow.steps.map((step, index) => ({
    stepId: step.step_id,
    startFrame: step.start_frame,
    endFrame: step.end_frame,
    color: SPAN_PALETTE[index % SPAN_PALETTE.length],
  }));
}

export function frameExtent(workflow: WorkflowJson): number {
  const last = workflow.steps[workflow.steps.length - 1];
  return last ? last.end_frame : 0;
}

export function stepAt(workflow: WorkflowJson, frame: number): StepJson | null {
  for (const step of workflow.steps) {
    if (step.start_frame <= frame && frame <= step.end_frame) return step;
  }
  return null;
}

// The right-panel object list: objects of the step under the playhead,
// nothing while the playhead sits in an idle gap.
export function objectsAt(workflow: WorkflowJson, frame: number): string[] {
  const step = stepAt(workflow, frame);
  return step ? [...step.objects] : [];
}

function at(state: TimelineState, frame: number, cue: NavCue = null): NavResult {
  return { state: { workflow: state.workflow, currentFrame: frame }, cue };
}

// "<<": jump to the first frame of the step that starts before the
// playhead. From inside a step that means its own first frame; from a
// step's first frame it means the previous step.
export function prevStep(state: TimelineState): NavResult {
  let target: StepJson | null = null;
  for (const step of state.workflow.steps) {
    if (step.start_frame < state.currentFrame) target = step;
  }
  if (target === null) {
    const first = state.workflow.steps[0];
    const frame = first ? first.start_frame : state.currentFrame;
    return at(state, frame, "at-start");
  }
  return at(state, target.start_frame);
}

// ">>": jump to the first frame of the next step.
export function nextStep(state: TimelineState): NavResult {
  for (const step of state.workflow.steps) {
    if (step.start_frame > state.currentFrame) return at(state, step.start_frame);
  }
  return at(state, state.currentFrame, "at-end");
}

export function frameStep(state: TimelineState, delta: number): NavResult {
  const extent = frameExtent(state.workflow);
  const target = state.currentFrame + delta;
  if (target < 0) return at(state, 0, state.currentFrame === 0 ? "at-start" : null);
  if (target > extent) {
    return at(state, extent, state.currentFrame === extent ? "at-end" : null);
  }
  return at(state, target);
}
