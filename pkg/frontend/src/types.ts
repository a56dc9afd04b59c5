// Wire shapes for the authoring service. Field names mirror the server
// JSON exactly; unknown extra fields are carried along untouched so a
// round trip through the UI never strips what other tools wrote.

export interface BoxJson {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
  label?: string | null;
  score?: number | null;
  feature?: number[] | null;
}

export interface StepJson {
  step_id: number;
  start_frame: number;
  end_frame: number;
  objects: string[];
  completion_object?: string;
  note?: string;
  [extra: string]: unknown;
}

export interface WorkflowJson {
  workflow_id: string;
  video_ref: string;
  fps: number;
  revision: number;
  steps: StepJson[];
  [extra: string]: unknown;
}

export interface SegmentJson {
  start_frame: number;
  end_frame: number;
  step_id: number;
}

export type PredicateJson =
  | { op: "atom"; class_name: string; min_count: number; min_score: number }
  | { op: "and" | "or" | "not"; children: PredicateJson[] };

export type StateKind = "start" | "normal" | "error" | "done";

export interface TransitionJson {
  to: string;
  priority: number;
  predicate: PredicateJson;
}

export interface FsmStateJson {
  name: string;
  kind: StateKind;
  guidance: string;
  transitions: TransitionJson[];
}

export interface FsmJson {
  task_name: string;
  debounce: number;
  detector_classes: string[];
  states: FsmStateJson[];
}

export interface DiagnosticJson {
  level: string;
  message: string;
  state: string | null;
}

export interface PackageDoc {
  format_version: number;
  task_name: string;
  checksum: string;
  debounce: number;
  detector_classes: string[];
  start_state: string;
  states: unknown[];
  [extra: string]: unknown;
}

export interface StatusJson {
  state: string;
  guidance: string;
  changed: boolean;
  done: boolean;
  candidate: string | null;
  counter: number;
}

export interface SimulationJson {
  task_name: string;
  statuses: StatusJson[];
  final_state: string;
  done: boolean;
}

export interface TraceInfo {
  trace_id: string;
  frame_count: number;
}
