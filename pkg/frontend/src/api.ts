import type {
  DiagnosticJson,
  FsmJson,
  PackageDoc,
  SegmentJson,
  SimulationJson,
  TraceInfo,
  WorkflowJson,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly diagnostics: string[] = [],
  ) {
    super(message);
    this.name = "ApiError";
  }
}

// 409 with the server's revision attached, so callers can tell the user
// exactly how far behind they are instead of silently clobbering.
export class ConflictError extends ApiError {
  constructor(
    message: string,
    readonly currentRevision: number | null,
  ) {
    super(409, message);
    this.name = "ConflictError";
  }
}

export type WorkflowEdit =
  | { op: "split"; step_id: number; frame: number }
  | { op: "merge"; step_id: number }
  | { op: "edit_objects"; step_id: number; add?: string[]; remove?: string[] }
  | { op: "set_completion"; step_id: number; object: string | null }
  | { op: "set_note"; step_id: number; note: string | null };

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Api {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const text = await response.text();
    let record: any = null;
    if (text) {
      try {
        record = JSON.parse(text);
      } catch {
        record = null;
      }
    }
    if (!response.ok) {
      const message =
        record && typeof record.error === "string"
          ? record.error
          : `${method} ${path} failed with status ${response.status}`;
      if (response.status === 409) {
        const revision =
          record && typeof record.current_revision === "number"
            ? record.current_revision
            : null;
        throw new ConflictError(message, revision);
      }
      const diagnostics =
        record && Array.isArray(record.diagnostics)
          ? record.diagnostics.map(String)
          : [];
      throw new ApiError(response.status, message, diagnostics);
    }
    return record as T;
  }

  health() {
    return this.request<{ status: string; protocol_version: number }>("GET", "/health");
  }

  // -- traces ----------------------------------------------------------

  createTrace(frames: unknown[], traceId?: string) {
    const body: Record<string, unknown> = { frames };
    if (traceId !== undefined) body.trace_id = traceId;
    return this.request<TraceInfo>("POST", "/traces", body);
  }

  listTraces() {
    return this.request<{ traces: TraceInfo[] }>("GET", "/traces");
  }

  segmentTrace(traceId: string, overrides: Record<string, number> = {}) {
    return this.request<{ trace_id: string; segments: SegmentJson[] }>(
      "POST",
      `/traces/${encodeURIComponent(traceId)}/segment`,
      overrides,
    );
  }

  workflowFromTrace(
    traceId: string,
    options: { workflow_id?: string; fps?: number } = {},
  ) {
    return this.request<WorkflowJson>(
      "POST",
      `/traces/${encodeURIComponent(traceId)}/workflow`,
      options,
    );
  }

  // -- workflows -------------------------------------------------------

  listWorkflows() {
    return this.request<{ workflows: WorkflowJson[] }>("GET", "/workflows");
  }

  createWorkflow(workflow: WorkflowJson) {
    return this.request<WorkflowJson>("POST", "/workflows", workflow);
  }

  getWorkflow(workflowId: string) {
    return this.request<WorkflowJson>(
      "GET",
      `/workflows/${encodeURIComponent(workflowId)}`,
    );
  }

  putWorkflow(workflow: WorkflowJson) {
    return this.request<WorkflowJson>(
      "PUT",
      `/workflows/${encodeURIComponent(workflow.workflow_id)}`,
      workflow,
    );
  }

  editWorkflow(workflowId: string, edit: WorkflowEdit & { revision: number }) {
    return this.request<WorkflowJson>(
      "POST",
      `/workflows/${encodeURIComponent(workflowId)}/edits`,
      edit,
    );
  }

  frameUrl(workflowId: string, index: number): string {
    return `${this.baseUrl}/workflows/${encodeURIComponent(workflowId)}/frames/${index}.png`;
  }

  // -- task models -----------------------------------------------------

  listFsms() {
    return this.request<{ fsms: { task_name: string; state_count: number }[] }>(
      "GET",
      "/fsms",
    );
  }

  getFsm(taskName: string) {
    return this.request<FsmJson>("GET", `/fsms/${encodeURIComponent(taskName)}`);
  }

  createFsm(fsm: FsmJson) {
    return this.request<FsmJson>("POST", "/fsms", fsm);
  }

  putFsm(fsm: FsmJson) {
    return this.request<FsmJson>(
      "PUT",
      `/fsms/${encodeURIComponent(fsm.task_name)}`,
      fsm,
    );
  }

  scaffoldFsm(options: { workflow_id: string; task_name?: string; debounce?: number }) {
    return this.request<FsmJson>("POST", "/fsms/scaffold", options);
  }

  validateFsm(taskName: string) {
    return this.request<{ diagnostics: DiagnosticJson[] }>(
      "POST",
      `/fsms/${encodeURIComponent(taskName)}/validate`,
    );
  }

  compileFsm(taskName: string) {
    return this.request<PackageDoc>(
      "POST",
      `/fsms/${encodeURIComponent(taskName)}/compile`,
    );
  }

  // -- packages and simulation -----------------------------------------

  listPackages() {
    return this.request<{ packages: { task_name: string; checksum: string }[] }>(
      "GET",
      "/packages",
    );
  }

  getPackage(taskName: string) {
    return this.request<PackageDoc>(
      "GET",
      `/packages/${encodeURIComponent(taskName)}`,
    );
  }

  registerPackage(document: PackageDoc) {
    return this.request<{ task_name: string; checksum: string }>(
      "POST",
      "/packages",
      document,
    );
  }

  simulate(taskName: string, frames: unknown[][]) {
    return this.request<SimulationJson>("POST", "/simulations", {
      task_name: taskName,
      frames,
    });
  }
}
