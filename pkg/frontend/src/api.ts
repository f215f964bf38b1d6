/**
 * Typed client for the grading service.
 *
 * All requests go through `request()` so callers get one of three shapes:
 * a parsed payload, a typed service error ({code, message, current_state}),
 * or a transport failure (service unreachable). Controllers decide how each
 * shape renders; nothing here touches the DOM.
 */

export type GradeValue = string | boolean;

export interface WorkItem {
  session_id: string;
  image_id: string;
  task: string;
  round: number;
  visible_counterpart_grade: GradeValue | null;
  visible_comments: string[];
}

export interface RoundEntry {
  grader_id: string;
  round: number;
  value: GradeValue;
  comment: string;
}

export interface SessionView {
  session_id: string;
  image_id: string;
  task: string;
  state: string;
  round: number;
  awaiting: string[];
  awaiting_tiebreak: boolean;
  final_value: GradeValue | null;
  provenance: string | null;
  rounds: RoundEntry[];
}

export interface ServiceErrorBody {
  code: string;
  message: string;
  current_state: { state: string; round: number; awaiting: string[] } | null;
}

export interface AgreementRates {
  n: number;
  regional: number | null;
  algorithm: number | null;
}

export interface Progress {
  sessions: number;
  states: Record<string, number>;
  provenance: Record<string, number>;
  agreement: Record<string, AgreementRates>;
}

export interface SubmitBody {
  grader_id: string;
  value: GradeValue;
  comment: string;
  request_token: string;
  expected_round?: number;
}

export interface CohortItem {
  image_id: string;
  regional_value?: GradeValue;
  algorithm_value?: GradeValue;
}

export interface CohortRequest {
  task: string;
  specialist_a: string;
  specialist_b: string;
  senior: string;
  items: CohortItem[];
}

export type ApiResult<T> =
  | { kind: "ok"; value: T }
  | { kind: "error"; status: number; error: ServiceErrorBody }
  | { kind: "unreachable"; detail: string };

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<ApiResult<T>> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      return { kind: "unreachable", detail: String(err) };
    }
    if (response.ok) {
      return { kind: "ok", value: (await response.json()) as T };
    }
    let body: ServiceErrorBody;
    try {
      const raw = (await response.json()) as Partial<ServiceErrorBody> & {
        detail?: unknown;
      };
      body = {
        code: raw.code ?? "error",
        message: raw.message ?? JSON.stringify(raw.detail ?? raw),
        current_state: raw.current_state ?? null,
      };
    } catch {
      body = { code: "error", message: response.statusText, current_state: null };
    }
    return { kind: "error", status: response.status, error: body };
  }

  listWork(graderId: string): Promise<ApiResult<WorkItem[]>> {
    return this.request<WorkItem[]>(`/graders/${encodeURIComponent(graderId)}/work`);
  }

  getSession(sessionId: string, graderId: string): Promise<ApiResult<SessionView>> {
    const query = new URLSearchParams({ grader_id: graderId });
    return this.request<SessionView>(
      `/sessions/${encodeURIComponent(sessionId)}?${query}`,
    );
  }

  submitGrade(sessionId: string, body: SubmitBody): Promise<ApiResult<SessionView>> {
    return this.request<SessionView>(
      `/sessions/${encodeURIComponent(sessionId)}/grades`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      },
    );
  }

  createCohort(
    request: CohortRequest,
  ): Promise<ApiResult<{ created: string[]; conflicts: string[] }>> {
    return this.request(`/cohorts`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
  }

  progress(): Promise<ApiResult<Progress>> {
    return this.request<Progress>(`/progress`);
  }
}
