/** Wire types mirroring the scenario service JSON API. */

export interface EventSummary {
  kind: string;
  date: string;
  value: number;
  description: string;
}

export interface DatasetSummary {
  start: string;
  days: number;
  total_cases: number;
  population: number;
  events: EventSummary[];
}

export interface ModelInfo {
  id: string;
  kind: string;
  dataset: DatasetSummary;
}

export interface FactualResponse {
  dates: string[];
  observed: number[];
  incidence: number[];
  m_policy: number[];
  m_media: number[];
  m_comp: number[];
  compliance: number[];
  risk: number[];
}

export interface CounterfactualResponse {
  scenario: string;
  factual: number[];
  cf_trajectory: number[];
  cases_averted: number;
  peak_reduction: number;
  delay_to_peak: number;
  pct_change_cumulative: number;
  ci: Record<string, [number, number]> | null;
  ci_bands: number[][] | null;
  n_dropped: number;
  n_replicas: number;
}

export interface CiJobResult {
  point: Record<string, number>;
  ci: Record<string, [number, number]>;
  ci_bands: number[][];
  n_dropped: number;
  n_replicas: number;
}

export interface JobResponse {
  status: "pending" | "done" | "failed";
  result?: CiJobResult;
  error?: string;
  message?: string;
}
