import { Api, ConflictError, type WorkflowEdit } from "../src/api.js";
import type { FsmJson, StepJson, WorkflowJson } from "../src/types.js";
import type { WorkflowApi } from "../src/workflowEditor.js";

export function sampleWorkflow(): WorkflowJson {
  return {
    workflow_id: "wf",
    video_ref: "vid",
    fps: 30,
    revision: 3,
    steps: [
      {
        step_id: 0,
        start_frame: 10,
        end_frame: 49,
        objects: ["bolt", "washer"],
        completion_object: "bolt",
      },
      { step_id: 1, start_frame: 60, end_frame: 99, objects: ["wrench"] },
      { step_id: 2, start_frame: 100, end_frame: 149, objects: ["cap"], note: "press fit" },
    ],
  };
}

export function sampleFsm(): FsmJson {
  return {
    task_name: "kettle",
    debounce: 3,
    detector_classes: ["base", "lid"],
    states: [
      {
        name: "start",
        kind: "start",
        guidance: "Place the base",
        transitions: [
          {
            to: "built",
            priority: 10,
            predicate: { op: "atom", class_name: "base", min_count: 1, min_score: 0 },
          },
          {
            to: "oops",
            priority: 0,
            predicate: {
              op: "and",
              children: [
                { op: "atom", class_name: "lid", min_count: 1, min_score: 0.5 },
                {
                  op: "not",
                  children: [
                    { op: "atom", class_name: "base", min_count: 1, min_score: 0 },
                  ],
                },
              ],
            },
          },
        ],
      },
      {
        name: "built",
        kind: "normal",
        guidance: "Fit the lid",
        transitions: [
          {
            to: "done",
            priority: 10,
            predicate: { op: "atom", class_name: "lid", min_count: 2, min_score: 0 },
          },
        ],
      },
      {
        name: "oops",
        kind: "error",
        guidance: "Lid before base, take it off",
        transitions: [
          {
            to: "start",
            priority: 10,
            predicate: {
              op: "not",
              children: [{ op: "atom", class_name: "lid", min_count: 1, min_score: 0 }],
            },
          },
        ],
      },
      { name: "done", kind: "done", guidance: "Finished", transitions: [] },
    ],
  };
}

// In-memory stand-in for the workflow endpoints with the same revision
// contract as the service: reject stale revisions with the server's
// current one attached, bump on every committed edit.
export class FakeWorkflowServer {
  stored: WorkflowJson;
  editCalls = 0;
  // when set, the next edit parks until release() runs
  private gate: Promise<void> | null = null;
  private release: (() => void) | null = null;

  constructor(initial: WorkflowJson) {
    this.stored = structuredClone(initial);
  }

  holdNextEdit(): () => void {
    this.gate = new Promise((resolve) => {
      this.release = () => resolve();
    });
    return () => this.release?.();
  }

  get api(): WorkflowApi {
    return {
      getWorkflow: async () => structuredClone(this.stored),
      editWorkflow: async (_id: string, edit: WorkflowEdit & { revision: number }) => {
        this.editCalls += 1;
        if (this.gate) {
          const gate = this.gate;
          this.gate = null;
          await gate;
        }
        if (edit.revision !== this.stored.revision) {
          throw new ConflictError("stale revision", this.stored.revision);
        }
        this.applyEdit(edit);
        this.stored.revision += 1;
        return structuredClone(this.stored);
      },
    };
  }

  private applyEdit(edit: WorkflowEdit): void {
    const steps = this.stored.steps;
    const index = steps.findIndex((s) => s.step_id === edit.step_id);
    if (index < 0) throw new Error(`no step ${edit.step_id}`);
    const step = steps[index];
    if (edit.op === "split") {
      const left: StepJson = { ...step, end_frame: edit.frame - 1 };
      const right: StepJson = { ...step, start_frame: edit.frame };
      steps.splice(index, 1, left, right);
    } else if (edit.op === "merge") {
      const next = steps[index + 1];
      if (!next) throw new Error("cannot merge the last step");
      const merged: StepJson = {
        ...step,
        end_frame: next.end_frame,
        objects: [...step.objects, ...next.objects.filter((o) => !step.objects.includes(o))],
      };
      steps.splice(index, 2, merged);
    } else if (edit.op === "edit_objects") {
      let objects = [...step.objects, ...(edit.add ?? [])];
      objects = objects.filter((o) => !(edit.remove ?? []).includes(o));
      steps[index] = { ...step, objects };
    } else if (edit.op === "set_completion") {
      const updated = { ...step };
      if (edit.object === null) delete updated.completion_object;
      else updated.completion_object = edit.object;
      steps[index] = updated;
    } else {
      const updated = { ...step };
      if (edit.note === null) delete updated.note;
      else updated.note = edit.note;
      steps[index] = updated;
    }
    steps.forEach((s, i) => (s.step_id = i));
  }
}

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

// Api wired to a scripted fetch; records every request it makes.
export function scriptedApi(
  script: { status: number; body: unknown }[],
): { api: Api; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const queue = [...script];
  const fetchImpl = async (input: string, init?: RequestInit): Promise<Response> => {
    const call: RecordedCall = {
      url: input,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
    };
    calls.push(call);
    const next = queue.shift();
    if (!next) throw new Error(`unscripted request: ${call.method} ${call.url}`);
    return new Response(JSON.stringify(next.body), {
      status: next.status,
      headers: { "content-type": "application/json" },
    });
  };
  return { api: new Api("http://svc", fetchImpl), calls };
}
