/** Typed fetch client for the comparison service. */

export interface SourceInfo {
  name: string;
  profile: string;
  document_count: number;
}

export interface PresetInfo {
  name: string;
  description: string;
  sources: { name: string; profile: string }[];
  dataset_size: number;
}

export interface ArmSpec {
  name: string;
  mode: string;
  selector?: string;
  top_k_per_source?: number;
  keep_k?: number;
  preferred_cap?: number;
  other_cap?: number;
  decompose?: boolean;
  use_reflection?: boolean;
  max_reflexion_times?: number;
}

export interface RunRequest {
  preset?: string;
  dataset?: string;
  sample_size: number;
  sources?: string[];
  arms: ArmSpec[];
}

export interface JobHandle {
  id: string;
  state: "queued" | "running" | "done" | "failed";
  progress: { completed: number; total: number };
  error: string | null;
  report?: ComparisonReport;
}

export interface ArmAggregates {
  mean_em: number;
  mean_f1: number;
  mean_prompt_tokens: number;
  mean_latency?: number;
}

export interface ArmReport {
  name: string;
  config: Record<string, unknown>;
  aggregates: ArmAggregates;
  records: Record<string, unknown>[];
}

export interface ComparisonReport {
  dataset: string;
  sample_size: number;
  query_ids: string[];
  arms: ArmReport[];
}

export interface EvidenceItem {
  id: string;
  source: string;
  score: number;
  selection_score: number;
}

export interface RoutingInfo {
  preferred_source: string | null;
  raw_reply: string;
  error: string | null;
}

export interface AttemptDetail {
  attempt: number;
  routing: RoutingInfo | null;
  pool_counts: Record<string, number>;
  capped_counts: Record<string, number>;
  retrieval_failures: Record<string, string>;
  evidence: EvidenceItem[];
  answer: string;
  sufficient: boolean;
  notes: string[];
}

export interface SubqueryTrace {
  index: number;
  template: string;
  bound_query: string;
  answer: string;
  reasoning: string;
  sufficient: boolean;
  attempts: number;
  fallback: boolean;
  attempts_detail: AttemptDetail[];
  notes: string[];
}

export interface TraceRecord {
  arm: string;
  query_id: string;
  em: number;
  f1: number;
  question: string;
  final_answer: string;
  subqueries: SubqueryTrace[];
  notes: string[];
}

export interface TracePayload {
  query_id: string;
  records: TraceRecord[];
}

async function fail(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && body.detail !== undefined) {
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    }
  } catch {
    // non-JSON error body, keep the status text
  }
  throw new Error(`${response.status}: ${detail}`);
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    await fail(response);
  }
  return (await response.json()) as T;
}

export function createApi(base = "") {
  return {
    async getSources(): Promise<SourceInfo[]> {
      return asJson(await fetch(`${base}/sources`));
    },

    async getPresets(): Promise<PresetInfo[]> {
      return asJson(await fetch(`${base}/presets`));
    },

    async uploadSource(
      file: File,
      name: string,
      profile: string,
      format: string
    ): Promise<SourceInfo> {
      const form = new FormData();
      form.append("file", file);
      form.append("name", name);
      form.append("profile", profile);
      form.append("format", format);
      return asJson(await fetch(`${base}/sources`, { method: "POST", body: form }));
    },

    async startRun(body: RunRequest): Promise<JobHandle> {
      return asJson(
        await fetch(`${base}/runs`, {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify(body),
        })
      );
    },

    async getRun(id: string): Promise<JobHandle> {
      return asJson(await fetch(`${base}/runs/${id}`));
    },

    async getReport(id: string): Promise<ComparisonReport> {
      return asJson(await fetch(`${base}/runs/${id}/report`));
    },

    async getTrace(id: string, queryId: string): Promise<TracePayload> {
      return asJson(await fetch(`${base}/runs/${id}/trace/${queryId}`));
    },
  };
}

export type Api = ReturnType<typeof createApi>;
