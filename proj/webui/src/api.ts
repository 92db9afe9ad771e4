// Typed client for the service's JSON API. Every number the UI shows comes
// back through here; nothing is computed locally.

export type Json = null | boolean | number | string | Json[] | { [key: string]: Json };

export interface FieldError {
  field: string;
  message: string;
}

export interface SolveResult {
  test: string;
  target: string;
  n_per_arm: number[];
  n_total: number;
  achieved_power: number;
  formula_id: string;
  events_required?: number;
  effect?: { field: string; value: number };
}

export interface SolveResponse extends SolveResult {
  sample_size?: number;
  arms: string[];
  inputs: Record<string, Json>;
  defaults_applied: string[];
}

export interface RequiredParam {
  name: string;
  description: string;
  default?: string;
  alternatives: string[];
}

export interface Recommendation {
  test: string;
  rationale: string;
  required_params: RequiredParam[];
  alternatives: { test: string; reason: string }[];
}

export interface Reply {
  ok: boolean;
  explanation: string;
  prompt?: string;
  pending: string[];
  errors: FieldError[];
  assumed: string[];
  recommendation?: Recommendation;
  result?: SolveResult;
  transcript?: string;
}

export interface HistoryEntry {
  at_ms: number;
  command: string;
  ok: boolean;
  explanation: string;
}

export interface SessionState {
  id: string;
  descriptor: Record<string, string>;
  test: string | null;
  target: string;
  known: Record<string, Json>;
  pending: string[];
  history: HistoryEntry[];
  created_ms: number;
  updated_ms: number;
  expires_ms?: number;
}

export interface CommandResponse {
  reply: Reply;
  session: SessionState;
  result_id?: string;
  interpretation: { command: string; fell_back: boolean; diagnostics: string[] };
}

/** Non-2xx answer, carrying the service's body verbatim. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: { error?: string; message?: string; errors?: FieldError[]; expired_at_ms?: number },
  ) {
    super(body.message ?? body.errors?.map((e) => `${e.field}: ${e.message}`).join("; ") ?? `HTTP ${status}`);
  }

  get fieldErrors(): FieldError[] {
    return this.body.errors ?? [];
  }
}

export type Fetch = (url: string, init?: { method?: string; body?: string; headers?: Record<string, string> }) => Promise<{
  status: number;
  ok: boolean;
  text(): Promise<string>;
}>;

/** Records every parsed response so displayed values can be audited. */
export interface ResponseLog {
  record(method: string, path: string, status: number, body: unknown): void;
}

export class ApiClient {
  private readonly base: string;

  constructor(
    baseUrl: string,
    private readonly fetchFn: Fetch = globalThis.fetch as unknown as Fetch,
    private readonly log?: ResponseLog,
  ) {
    this.base = baseUrl.replace(/\/+$/, "") + "/api/v1/";
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(this.base + path, {
      method,
      body: body === undefined ? undefined : JSON.stringify(body),
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
    });
    const parsed = JSON.parse(await res.text());
    this.log?.record(method, path, res.status, parsed);
    if (!res.ok) throw new ApiError(res.status, parsed);
    return parsed as T;
  }

  health() {
    return this.call<{ status: string; version: string; endpoints: number }>("GET", "health");
  }

  openapi() {
    return this.call<Record<string, Json>>("GET", "openapi.json");
  }

  createSession() {
    return this.call<SessionState>("POST", "sessions");
  }

  getSession(id: string) {
    return this.call<SessionState>("GET", `sessions/${encodeURIComponent(id)}`);
  }

  command(id: string, text: string) {
    return this.call<CommandResponse>("POST", `sessions/${encodeURIComponent(id)}/command`, { text });
  }

  compute(endpoint: string, body: Record<string, Json>) {
    return this.call<SolveResponse>("POST", endpoint, body);
  }

  /** Power at each n, one service call per point. */
  async powerCurve(endpoint: string, body: Record<string, Json>, ns: number[]) {
    const points: { n: number; achieved_power: number; n_total: number }[] = [];
    for (const n of ns) {
      const r = await this.compute(endpoint, { ...body, n, target: "power" });
      points.push({ n, achieved_power: r.achieved_power, n_total: r.n_total });
    }
    return points;
  }
}
