import { describe, expect, it } from "vitest";

import { ApiError, ConflictError } from "../src/api.js";
import { sampleWorkflow, scriptedApi } from "./helpers.js";

describe("request shapes", () => {
  it("edits post to the workflow edits endpoint with the op inline", async () => {
    const wf = sampleWorkflow();
    const { api, calls } = scriptedApi([{ status: 200, body: wf }]);
    await api.editWorkflow("wf", {
      op: "split",
      step_id: 0,
      frame: 30,
      revision: 3,
    });
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://svc/workflows/wf/edits");
    expect(calls[0].method).toBe("POST");
    expect(calls[0].body).toEqual({ op: "split", step_id: 0, frame: 30, revision: 3 });
  });

  it("scaffolding posts the workflow id and options", async () => {
    const { api, calls } = scriptedApi([
      { status: 200, body: { task_name: "t", debounce: 3, detector_classes: [], states: [] } },
    ]);
    await api.scaffoldFsm({ workflow_id: "wf", task_name: "t", debounce: 4 });
    expect(calls[0].url).toBe("http://svc/fsms/scaffold");
    expect(calls[0].body).toEqual({ workflow_id: "wf", task_name: "t", debounce: 4 });
  });

  it("simulations post the task name with the frames", async () => {
    const { api, calls } = scriptedApi([
      { status: 200, body: { task_name: "t", statuses: [], final_state: "start", done: false } },
    ]);
    const frames = [[{ x_min: 0, y_min: 0, x_max: 1, y_max: 1, label: "cup", score: 1 }]];
    const result = await api.simulate("t", frames);
    expect(calls[0].url).toBe("http://svc/simulations");
    expect(calls[0].body).toEqual({ task_name: "t", frames });
    expect(result.final_state).toBe("start");
  });

  it("frame urls point at the rendered png", () => {
    const { api } = scriptedApi([]);
    expect(api.frameUrl("wf", 17)).toBe("http://svc/workflows/wf/frames/17.png");
  });
});

describe("error mapping", () => {
  it("a 409 becomes a ConflictError carrying the server revision", async () => {
    const { api } = scriptedApi([
      { status: 409, body: { error: "stale revision", current_revision: 7 } },
    ]);
    const err = await api
      .editWorkflow("wf", { op: "merge", step_id: 0, revision: 1 })
      .then(
        () => null,
        (e) => e,
      );
    expect(err).toBeInstanceOf(ConflictError);
    expect(err.status).toBe(409);
    expect(err.currentRevision).toBe(7);
    expect(err.message).toBe("stale revision");
  });

  it("a 422 keeps the compile diagnostics", async () => {
    const diagnostics = ["error: state 'limbo' is unreachable"];
    const { api } = scriptedApi([
      { status: 422, body: { error: "compile failed", diagnostics } },
    ]);
    const err = await api.compileFsm("t").then(
      () => null,
      (e) => e,
    );
    expect(err).toBeInstanceOf(ApiError);
    expect(err).not.toBeInstanceOf(ConflictError);
    expect(err.diagnostics).toEqual(diagnostics);
  });

  it("a plain 404 surfaces the server message", async () => {
    const { api } = scriptedApi([{ status: 404, body: { error: "no such workflow" } }]);
    const err = await api.getWorkflow("missing").then(
      () => null,
      (e) => e,
    );
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
    expect(err.message).toBe("no such workflow");
    expect(err.diagnostics).toEqual([]);
  });

  it("success paths return the parsed document", async () => {
    const wf = sampleWorkflow();
    const { api } = scriptedApi([{ status: 200, body: wf }]);
    const fetched = await api.getWorkflow("wf");
    expect(fetched).toEqual(wf);
  });
});
