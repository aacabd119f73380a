/**
 * Typed client for the refinement session HTTP API.
 *
 * The UI talks to the server exclusively through this module; the only
 * mutating calls are POST /session/decision and POST /session/undo.
 */

export type Action = "select_leaf" | "reject" | "skip";

export interface CandidateView {
  done: false;
  node_id: string;
  label: string;
  kind: string;
  ancestors: string[];
  children: string[];
  event_count: number;
  descendant_count: number;
  rank: number;
}

export interface DoneView {
  done: true;
}

export type NextResponse = CandidateView | DoneView;

export interface Progress {
  decided: number;
  remaining: number;
  total: number;
}

export interface DecisionSummary {
  node_id: string;
  action: Action;
  removed_candidates: string[];
  removed_nodes: string[];
}

export interface UndoResult {
  undone: string;
  action: Action;
}

export interface NodeContext {
  id: string;
  label: string;
  kind: string;
  ancestors: string[];
  children: string[];
  event_count: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

/** The candidate was decided elsewhere before this request landed (409). */
export class StaleCandidateError extends ApiError {
  constructor(message: string) {
    super(409, message);
    this.name = "StaleCandidateError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  private readonly fetchImpl: FetchLike;

  constructor(readonly baseUrl: string, fetchImpl?: FetchLike) {
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  get exportUrl(): string {
    return `${this.baseUrl}/session/export`;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      /* non-JSON error body */
    }
    if (!response.ok) {
      const message =
        payload && typeof payload === "object" && "error" in payload
          ? String((payload as { error: unknown }).error)
          : `HTTP ${response.status}`;
      if (response.status === 409) {
        throw new StaleCandidateError(message);
      }
      throw new ApiError(response.status, message);
    }
    return payload as T;
  }

  next(): Promise<NextResponse> {
    return this.request<NextResponse>("/session/next");
  }

  decide(nodeId: string, action: Action): Promise<DecisionSummary> {
    return this.request<DecisionSummary>("/session/decision", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ node_id: nodeId, action }),
    });
  }

  undo(): Promise<UndoResult> {
    return this.request<UndoResult>("/session/undo", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: "{}",
    });
  }

  progress(): Promise<Progress> {
    return this.request<Progress>("/session/progress");
  }

  context(nodeId: string): Promise<NodeContext> {
    return this.request<NodeContext>(`/ontology/context/${encodeURIComponent(nodeId)}`);
  }

  exportOntology(): Promise<unknown> {
    return this.request<unknown>("/session/export");
  }
}
