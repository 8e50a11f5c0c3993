/**
 * Typed client for the review service HTTP API.
 *
 * Read endpoints are open; mutating endpoints carry the judge's token in the
 * X-Judge-Token header. Errors map HTTP status plus the service's "detail"
 * message into ApiError so views can branch on status codes (401 bad token,
 * 404 unknown case, 409 lease conflict, 422 invalid verdict).
 */

import { isRule, type Rule, type VerdictPayload } from "./rubric.js";

export interface RunSummary {
  run_id: string;
  status: string;
  served: boolean;
  pending: number;
}

export interface PendingCase {
  case_id: string;
  specialty: string;
  incidence_class: string;
  judge_kind: string;
  extraction_failed: boolean;
  leased: boolean;
}

export interface VignetteDetail {
  id: string;
  specialty: string;
  age: number;
  sex: string;
  narrative: string;
  gold_diagnosis: string;
  gold_synonyms: string[];
  gold_specialty: string;
  incidence_class: string;
}

export interface TurnDetail {
  index: number;
  role: string;
  text: string;
  contains_question: boolean;
}

export interface JudgmentDetail {
  top1_rule: string;
  top2_rule: string;
  referral_specialty: string | null;
  referral_correct: boolean | null;
  judge_kind: string;
  judge_id: string;
  rationale: string;
  extraction_failed: boolean;
}

export interface Lease {
  judge: string;
  expires_at: number;
}

export interface CaseDetail {
  case_id: string;
  vignette: VignetteDetail;
  turns: TurnDetail[];
  terminal_state: string | null;
  candidates: string[];
  judgment: JudgmentDetail;
  lease?: Lease;
  pending?: number;
}

export interface SpecialtyRowJson {
  specialty: string;
  total: number;
  top1_correct: number;
  top1_pct: number;
  top2_correct: number;
  top2_pct: number;
  referral_correct: number;
  referral_pct: number;
  avg_questions: number | null;
}

export interface IncidenceRowJson {
  incidence_class: string;
  total: number;
  top1_correct: number;
  top1_pct: number;
  top2_correct: number;
  top2_pct: number;
  referral_correct: number;
  referral_pct: number;
}

export interface QuestionRowJson {
  specialty: string;
  conversations: number;
  mean_questions: number | null;
  baseline_mean: number | null;
  pct_fewer: number | null;
  baseline_pct_fewer: number | null;
}

export interface ReportJson {
  run_id: string;
  rows: SpecialtyRowJson[];
  grand_total: SpecialtyRowJson;
  incidence_rows: IncidenceRowJson[];
  question_rows: QuestionRowJson[];
  question_total: QuestionRowJson | null;
  judged_automated: number;
  judged_human: number;
  unresolved: number;
  failed_cases: string[];
  provisional: boolean;
}

export type ReportTextFormat = "table" | "csv" | "markdown";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export interface ApiOptions {
  baseUrl?: string;
  token?: string | null;
  fetchFn?: typeof fetch;
}

export class ReviewApi {
  private readonly baseUrl: string;
  private readonly token: string | null;
  private readonly fetchFn: typeof fetch;

  constructor(options: ApiOptions = {}) {
    this.baseUrl = options.baseUrl ?? "";
    this.token = options.token ?? null;
    this.fetchFn = options.fetchFn ?? globalThis.fetch.bind(globalThis);
  }

  withToken(token: string | null): ReviewApi {
    return new ReviewApi({ baseUrl: this.baseUrl, token, fetchFn: this.fetchFn });
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body: unknown = await response.json();
        if (typeof body === "object" && body !== null && "detail" in body) {
          detail = String((body as { detail: unknown }).detail);
        }
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response;
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.request(path);
    return (await response.json()) as T;
  }

  private mutateHeaders(): Record<string, string> {
    if (this.token === null) {
      throw new ApiError(401, "no judge token configured");
    }
    return {
      "Content-Type": "application/json",
      "X-Judge-Token": this.token,
    };
  }

  listRuns(): Promise<RunSummary[]> {
    return this.getJson<RunSummary[]>("/runs");
  }

  listPending(runId: string): Promise<PendingCase[]> {
    return this.getJson<PendingCase[]>(`/runs/${encodeURIComponent(runId)}/pending`);
  }

  getCase(caseId: string): Promise<CaseDetail> {
    return this.getJson<CaseDetail>(`/cases/${encodeURIComponent(caseId)}`);
  }

  async checkout(caseId: string): Promise<CaseDetail & { lease: Lease }> {
    const response = await this.request(`/cases/${encodeURIComponent(caseId)}/checkout`, {
      method: "POST",
      headers: this.mutateHeaders(),
    });
    return (await response.json()) as CaseDetail & { lease: Lease };
  }

  async submitVerdict(
    caseId: string,
    payload: VerdictPayload,
  ): Promise<CaseDetail & { pending: number }> {
    for (const rule of [payload.top1_rule, payload.top2_rule]) {
      if (rule !== undefined && !isRule(rule)) {
        throw new ApiError(422, `rule ${String(rule)} is outside the rubric set`);
      }
    }
    const response = await this.request(`/cases/${encodeURIComponent(caseId)}/verdict`, {
      method: "POST",
      headers: this.mutateHeaders(),
      body: JSON.stringify(payload),
    });
    return (await response.json()) as CaseDetail & { pending: number };
  }

  getReport(runId: string): Promise<ReportJson> {
    return this.getJson<ReportJson>(`/runs/${encodeURIComponent(runId)}/report`);
  }

  async getReportText(runId: string, format: ReportTextFormat): Promise<string> {
    const response = await this.request(
      `/runs/${encodeURIComponent(runId)}/report?format=${format}`,
    );
    return response.text();
  }

  /** Expose the rule for payloads built outside the panel (tests, tooling). */
  static isRule(value: unknown): value is Rule {
    return isRule(value);
  }
}
