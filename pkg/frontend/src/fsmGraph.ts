import type {
  FsmJson,
  FsmStateJson,
  PredicateJson,
  StateKind,
} from "./types.js";

// Start and done are white with distinct borders; correct working
// states are green and error states red.
export type NodeColor = "white" | "green" | "red";

export function colorFor(kind: StateKind): NodeColor {
  if (kind === "error") return "red";
  if (kind === "normal") return "green";
  return "white";
}

export interface GraphNode {
  name: string;
  kind: StateKind;
  color: NodeColor;
  guidance: string;
  terminal: boolean;
}

export interface GraphEdge {
  from: string;
  to: string;
  priority: number;
  priorityBadge: string;
  label: string;
}

export interface FsmGraph {
  nodes: GraphNode[];
  edges: GraphEdge[];
  debounceBadge: string;
}

export function predicateLabel(predicate: PredicateJson): string {
  if (predicate.op === "atom") {
    let label = `${predicate.min_count}x ${predicate.class_name}`;
    if (predicate.min_score > 0) label += ` @>=${predicate.min_score}`;
    return label;
  }
  if (predicate.op === "not") {
    return `not (${predicateLabel(predicate.children[0])})`;
  }
  const parts = predicate.children.map(predicateLabel);
  return `(${parts.join(` ${predicate.op} `)})`;
}

export function buildGraph(fsm: FsmJson): FsmGraph {
  const nodes = fsm.states.map((state) => ({
    name: state.name,
    kind: state.kind,
    color: colorFor(state.kind),
    guidance: state.guidance,
    terminal: state.transitions.length === 0,
  }));
  const edges = fsm.states.flatMap((state) =>
    state.transitions.map((transition) => ({
      from: state.name,
      to: transition.to,
      priority: transition.priority,
      priorityBadge: `p${transition.priority}`,
      label: predicateLabel(transition.predicate),
    })),
  );
  return { nodes, edges, debounceBadge: `debounce ${fsm.debounce}` };
}

// Editing wrapper: local edits mark the document dirty until a save is
// acknowledged; copy/paste moves whole state definitions as JSON so an
// author never retypes guidance and transitions.
export class FsmEditor {
  fsm: FsmJson;
  dirty = false;

  constructor(fsm: FsmJson) {
    this.fsm = fsm;
  }

  get graph(): FsmGraph {
    return buildGraph(this.fsm);
  }

  private replaceState(name: string, updated: FsmStateJson): void {
    const states = this.fsm.states.map((s) => (s.name === name ? updated : s));
    this.fsm = { ...this.fsm, states };
    this.dirty = true;
  }

  setGuidance(stateName: string, guidance: string): void {
    const state = this.fsm.states.find((s) => s.name === stateName);
    if (!state) throw new Error(`no state named ${stateName}`);
    this.replaceState(stateName, { ...state, guidance });
  }

  copyState(stateName: string): string {
    const state = this.fsm.states.find((s) => s.name === stateName);
    if (!state) throw new Error(`no state named ${stateName}`);
    return JSON.stringify(state, null, 2);
  }

  pasteState(text: string): string {
    let parsed: FsmStateJson;
    try {
      parsed = JSON.parse(text) as FsmStateJson;
    } catch {
      throw new Error("clipboard does not hold a state definition");
    }
    if (typeof parsed?.name !== "string" || !Array.isArray(parsed.transitions)) {
      throw new Error("clipboard does not hold a state definition");
    }
    const taken = new Set(this.fsm.states.map((s) => s.name));
    let name = `${parsed.name}-copy`;
    for (let n = 2; taken.has(name); n += 1) name = `${parsed.name}-copy-${n}`;
    // A pasted copy starts as a plain working state; there is only one
    // start and one done, and they are not the thing being duplicated.
    const kind: StateKind = parsed.kind === "error" ? "error" : "normal";
    const state: FsmStateJson = { ...parsed, name, kind };
    this.fsm = { ...this.fsm, states: [...this.fsm.states, state] };
    this.dirty = true;
    return name;
  }

  markSaved(): void {
    this.dirty = false;
  }
}
