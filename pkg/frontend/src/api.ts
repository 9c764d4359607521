/** Thin client for the scenario service wire API. All epidemiology happens
 * server-side; this module only moves JSON.
 */

import type { ScenarioFile } from "./scenario.js";
import type {
  CounterfactualResponse,
  FactualResponse,
  JobResponse,
  ModelInfo,
} from "./types.js";

export class ServiceUnreachableError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ServiceUnreachableError";
  }
}

export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export class RequestError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "RequestError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface CiOptions {
  replicas?: number;
  blockLength?: number;
  seed?: number;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let res: Response;
    try {
      res = await this.fetchFn(this.baseUrl + path, init);
    } catch (exc) {
      throw new ServiceUnreachableError(
        `service at ${this.baseUrl} unreachable: ${exc}`);
    }
    let body: unknown;
    try {
      body = await res.json();
    } catch {
      throw new SchemaError(`non-JSON response from ${path}`);
    }
    if (!res.ok) {
      const message =
        typeof body === "object" && body !== null && "error" in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${res.status}`;
      throw new RequestError(message, res.status);
    }
    return body;
  }

  async fetchModels(): Promise<ModelInfo[]> {
    const body = await this.request("/models");
    const models = (body as { models?: unknown }).models;
    if (!Array.isArray(models)) {
      throw new SchemaError('"/models" response is missing a models array');
    }
    for (const m of models) {
      if (typeof m?.id !== "string" || typeof m?.dataset !== "object") {
        throw new SchemaError("malformed model entry in registry");
      }
    }
    return models as ModelInfo[];
  }

  async fetchFactual(modelId: string): Promise<FactualResponse> {
    const body = (await this.request(
      `/models/${encodeURIComponent(modelId)}/factual`,
    )) as Partial<FactualResponse>;
    if (!Array.isArray(body.dates) || !Array.isArray(body.incidence)) {
      throw new SchemaError("malformed factual response");
    }
    return body as FactualResponse;
  }

  async submitScenario(
    modelId: string,
    scenario: ScenarioFile,
  ): Promise<CounterfactualResponse> {
    const body = (await this.request(
      `/models/${encodeURIComponent(modelId)}/counterfactual`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({
          name: scenario.name,
          edits: scenario.edits,
          horizon: scenario.horizon,
        }),
      },
    )) as Partial<CounterfactualResponse>;
    if (!Array.isArray(body.factual) ||
        !Array.isArray(body.cf_trajectory) ||
        typeof body.cases_averted !== "number") {
      throw new SchemaError("malformed counterfactual response");
    }
    return body as CounterfactualResponse;
  }

  async requestCi(
    modelId: string,
    scenario: ScenarioFile,
    opts: CiOptions = {},
  ): Promise<string> {
    const params = new URLSearchParams({ ci: "true" });
    if (opts.replicas !== undefined) {
      params.set("replicas", String(opts.replicas));
    }
    if (opts.blockLength !== undefined) {
      params.set("block_length", String(opts.blockLength));
    }
    if (opts.seed !== undefined) {
      params.set("seed", String(opts.seed));
    }
    const body = (await this.request(
      `/models/${encodeURIComponent(modelId)}/counterfactual?${params}`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({
          name: scenario.name,
          edits: scenario.edits,
          horizon: scenario.horizon,
        }),
      },
    )) as { job_id?: unknown };
    if (typeof body.job_id !== "string") {
      throw new SchemaError("CI submission did not return a job id");
    }
    return body.job_id;
  }

  async pollJob(jobId: string): Promise<JobResponse> {
    const body = (await this.request(
      `/jobs/${encodeURIComponent(jobId)}`,
    )) as Partial<JobResponse>;
    if (body.status !== "pending" && body.status !== "done" &&
        body.status !== "failed") {
      throw new SchemaError("malformed job status");
    }
    return body as JobResponse;
  }

  async health(): Promise<boolean> {
    try {
      const body = (await this.request("/health")) as { status?: unknown };
      return body.status === "ok";
    } catch {
      return false;
    }
  }
}
