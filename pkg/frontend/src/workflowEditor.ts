import { Api, ApiError, ConflictError, type WorkflowEdit } from "./api.js";
import type { WorkflowJson } from "./types.js";

// The slice of the API the editor needs; tests substitute a fake.
export type WorkflowApi = Pick<Api, "getWorkflow" | "editWorkflow">;

export type EditorStatus = "empty" | "clean" | "saving" | "stale";

// Keeps the single-source-of-truth rule: the local workflow only ever
// changes to something the server has committed and answered with. An
// edit is sent with the revision we hold; until the reply lands the
// view keeps showing the old state, and a 409 freezes editing behind a
// banner until the user reloads.
export class WorkflowEditor {
  workflow: WorkflowJson | null = null;
  status: EditorStatus = "empty";
  banner: string | null = null;
  private listeners: Array<() => void> = [];

  constructor(private readonly api: WorkflowApi) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  async load(workflowId: string): Promise<WorkflowJson> {
    const workflow = await this.api.getWorkflow(workflowId);
    this.workflow = workflow;
    this.status = "clean";
    this.banner = null;
    this.emit();
    return workflow;
  }

  async reload(): Promise<WorkflowJson> {
    if (!this.workflow) throw new Error("no workflow loaded");
    return this.load(this.workflow.workflow_id);
  }

  split(stepId: number, frame: number): Promise<WorkflowJson> {
    return this.apply({ op: "split", step_id: stepId, frame });
  }

  merge(stepId: number): Promise<WorkflowJson> {
    return this.apply({ op: "merge", step_id: stepId });
  }

  editObjects(
    stepId: number,
    changes: { add?: string[]; remove?: string[] },
  ): Promise<WorkflowJson> {
    return this.apply({ op: "edit_objects", step_id: stepId, ...changes });
  }

  setCompletion(stepId: number, object: string | null): Promise<WorkflowJson> {
    return this.apply({ op: "set_completion", step_id: stepId, object });
  }

  setNote(stepId: number, note: string | null): Promise<WorkflowJson> {
    return this.apply({ op: "set_note", step_id: stepId, note });
  }

  private async apply(edit: WorkflowEdit): Promise<WorkflowJson> {
    if (!this.workflow) throw new Error("no workflow loaded");
    if (this.status === "stale") {
      throw new Error("workflow is stale; reload before editing");
    }
    const workflowId = this.workflow.workflow_id;
    const revision = this.workflow.revision;
    this.status = "saving";
    this.emit();
    try {
      const updated = await this.api.editWorkflow(workflowId, { ...edit, revision });
      this.workflow = updated;
      this.status = "clean";
      this.banner = null;
      this.emit();
      return updated;
    } catch (error) {
      if (error instanceof ConflictError) {
        this.status = "stale";
        const server =
          error.currentRevision === null ? "a newer one" : `revision ${error.currentRevision}`;
        this.banner = `Workflow changed on the server: you have revision ${revision}, the server has ${server}. Reload to continue.`;
      } else {
        // Domain rejections (bad split frame, merging the last step...)
        // leave the document valid; surface the message inline.
        this.status = "clean";
        this.banner = error instanceof ApiError ? error.message : String(error);
      }
      this.emit();
      throw error;
    }
  }
}
