// View model of one design session. It mirrors the service state and turns
// form edits into grammar commands; the service does all the arithmetic.

import { ApiClient, ApiError, FieldError, Json, Recommendation, SessionState, SolveResult } from "./api.js";

export interface ResultRow {
  seq: number;
  command: string;
  result: SolveResult;
}

export interface UiSession {
  state: SessionState;
  /** Unsent form values keyed by parameter name. */
  draft: Record<string, string>;
  lastResult?: SolveResult;
  recommendation?: Recommendation;
  explanation?: string;
  prompt?: string;
  fieldErrors: FieldError[];
  /** Results in the order received; what-if changes append. */
  results: ResultRow[];
  error?: string;
}

function numberText(v: Json | string): string {
  return typeof v === "string" ? v.trim() : JSON.stringify(v);
}

/** "set a 1, b 2" or "whatif ..." from parameter edits, in key order. */
export function commandText(verb: "set" | "whatif", edits: Record<string, Json | string>): string {
  const parts = Object.keys(edits)
    .sort()
    .map((k) => {
      const v = edits[k];
      return Array.isArray(v) ? `${k} [${v.map((x) => numberText(x)).join(", ")}]` : `${k} ${numberText(v)}`;
    });
  if (parts.length === 0) throw new Error("no edits");
  return `${verb} ${parts.join(", ")}`;
}

export function describeText(descriptor: Record<string, string>): string {
  const parts = Object.keys(descriptor)
    .sort()
    .map((k) => `${k}=${descriptor[k]}`);
  return `describe ${parts.join(" ")}`;
}

/** Form fields still to fill: the service's pending list, with descriptions and defaults when known. */
export function pendingFields(ui: UiSession) {
  const described = new Map((ui.recommendation?.required_params ?? []).map((p) => [p.name, p]));
  return ui.state.pending.map((name) => ({
    name,
    description: described.get(name)?.description ?? name,
    default: described.get(name)?.default,
    value: ui.draft[name] ?? "",
  }));
}

/** Drops responses that arrive after a newer request was issued. */
export class Sequencer {
  private issued = 0;

  async run<T>(task: () => Promise<T>): Promise<{ seq: number; value: T } | undefined> {
    const seq = ++this.issued;
    const value = await task();
    return seq === this.issued ? { seq, value } : undefined;
  }

  get latest(): number {
    return this.issued;
  }
}

export class SessionController {
  private readonly sequencer = new Sequencer();
  ui: UiSession;

  private constructor(
    private readonly api: ApiClient,
    state: SessionState,
  ) {
    this.ui = { state, draft: {}, fieldErrors: [], results: [] };
  }

  static async start(api: ApiClient) {
    return new SessionController(api, await api.createSession());
  }

  /** Reload: the service's copy is the truth. */
  static async resume(api: ApiClient, id: string) {
    return new SessionController(api, await api.getSession(id));
  }

  editDraft(name: string, value: string) {
    this.ui = { ...this.ui, draft: { ...this.ui.draft, [name]: value } };
  }

  /** Sends one command; stale answers are discarded. Returns false when dropped. */
  async send(text: string): Promise<boolean> {
    let outcome;
    try {
      outcome = await this.sequencer.run(() => this.api.command(this.ui.state.id, text));
    } catch (e) {
      if (e instanceof ApiError) {
        this.ui = { ...this.ui, error: e.message, fieldErrors: e.fieldErrors };
        return true;
      }
      throw e;
    }
    if (!outcome) return false;
    const { seq, value } = outcome;
    const reply = value.reply;
    const results = reply.result ? [...this.ui.results, { seq, command: value.interpretation.command, result: reply.result }] : this.ui.results;
    this.ui = {
      state: value.session,
      draft: reply.ok ? {} : this.ui.draft,
      lastResult: reply.result ?? this.ui.lastResult,
      recommendation: reply.recommendation ?? this.ui.recommendation,
      explanation: reply.explanation,
      prompt: reply.prompt,
      fieldErrors: reply.errors,
      results,
      error: undefined,
    };
    return true;
  }

  describe(descriptor: Record<string, string>) {
    return this.send(describeText(descriptor));
  }

  /** Submits the draft form. */
  submitDraft() {
    return this.send(commandText("set", this.ui.draft));
  }

  solve(target: "n" | "power" | "effect" = "n") {
    return this.send(`solve ${target}`);
  }

  whatIf(edits: Record<string, Json | string>) {
    return this.send(commandText("whatif", edits));
  }
}
