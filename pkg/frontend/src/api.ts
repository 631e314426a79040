// Typed client for the campaign service JSON API. Every number shown in the
// UI is traceable to one of these response shapes; the client never invents
// or transforms optimizer results.

export type ConditionMap = Record<string, string | number>;

export interface CreateResponse {
  id: string;
  status: CampaignStatus;
  leaves: number;
}

export interface SuggestResponse {
  round: number;
  status: string;
  conditions: ConditionMap[];
}

export interface ObservationResult {
  condition: ConditionMap;
  value: number;
}

export interface IngestSummary {
  round: number;
  best_so_far: number;
  status: string;
  locally_retired: number;
  globally_retired: number;
  abandoned: number;
}

export interface CampaignStatus {
  id?: string;
  round: number;
  status: string;
  best_so_far: number | null;
  n_observations: number;
  n_pseudo_live: number;
  outstanding: ConditionMap[];
  target_threshold: number | null;
  batch_size: number;
  max_rounds: number;
}

export interface TrajectoryRound {
  round: number;
  batch_values: number[];
  best_so_far: number;
  locally_retired: number;
  globally_retired: number;
  abandoned: number;
}

export interface Trajectory {
  rounds: TrajectoryRound[];
  target_threshold: number | null;
  best_so_far: number | null;
}

export interface TreeNodeView {
  id: number;
  level: number;
  variable: string | null;
  subset: number | null;
  parent: number | null;
  children: number[];
  n: number;
  q: number;
  mean: number;
}

export interface TreeView {
  ranking: string[];
  nodes: TreeNodeView[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service error ${status}: ${detail}`);
  }
}

async function request<T>(url: string, init: RequestInit = {}): Promise<T> {
  const response = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  createCampaign(config: unknown): Promise<CreateResponse> {
    return request(`${this.base}/campaigns`, {
      method: "POST",
      body: JSON.stringify({ config }),
    });
  }

  suggest(id: string): Promise<SuggestResponse> {
    return request(`${this.base}/campaigns/${id}/suggest`, { method: "POST" });
  }

  submitObservations(id: string, results: ObservationResult[]): Promise<IngestSummary> {
    return request(`${this.base}/campaigns/${id}/observations`, {
      method: "POST",
      body: JSON.stringify({ results }),
    });
  }

  getCampaign(id: string): Promise<CampaignStatus> {
    return request(`${this.base}/campaigns/${id}`);
  }

  getTrajectory(id: string): Promise<Trajectory> {
    return request(`${this.base}/campaigns/${id}/trajectory`);
  }

  getTree(id: string): Promise<TreeView> {
    return request(`${this.base}/campaigns/${id}/tree`);
  }
}
