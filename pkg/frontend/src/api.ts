// Typed client for the /v1 API. The dashboard renders nothing it did not
// receive from these endpoints.

export interface HealthyRange {
  lower: number;
  upper: number;
}

export interface ConfigResponse {
  healthy_ranges: Record<string, HealthyRange>;
  seasons: Record<string, { start: [number, number]; end: [number, number] }>;
  analysis: Record<string, number>;
}

export interface PatientRow {
  patient_id: string;
  severity: string;
  region: string;
  deployment_start: string;
  deployment_end: string;
  answer_rate: number;
  eligible: boolean;
  season: string;
}

export interface TriggerReport {
  patient_id: string;
  label: string;
  start: string;
  end: string;
  days_in_period: number;
  answered_days: number;
  episode_days: number;
  unhealthy_days: Record<string, number>;
  contributor_days: Record<string, number>;
  explained_days: number;
  major_triggers: string[];
  temp_range: [number, number] | null;
  humidity_range: [number, number] | null;
}

export interface PredictionEvaluation {
  patient_id: string;
  learned_triggers: string[];
  hit_days: number;
  unexplained_days: { date: string; prolonged: Record<string, boolean> }[];
  false_alarm_days: number;
}

export interface TriggersResponse {
  patient_id: string;
  learning: TriggerReport;
  prediction: TriggerReport;
  evaluation: PredictionEvaluation | null;
  insufficient_reason: string | null;
  segments: { kind: string; start: string; end: string }[];
}

export interface TimelineDay {
  date: string;
  answered: boolean;
  symptoms: string[];
  rescue_taken: boolean | null;
  controller_taken: boolean | null;
  night_awakening: boolean | null;
  activity_limited: boolean | null;
  lung: { pef: number; fev1: number }[];
  env: {
    pollen_max: number | null;
    pm25_max: number | null;
    ozone_max: number | null;
    temp_min: number | null;
    temp_max: number | null;
    humidity_min: number | null;
    humidity_max: number | null;
  };
  is_episode: boolean | null;
  reasons: string[];
}

export interface TimelineResponse {
  patient_id: string;
  from: string;
  to: string;
  days: TimelineDay[];
}

export interface SummaryResponse {
  patient_id: string;
  answered_days: number;
  episode_days: number;
  symptom_days: Record<string, number>;
  night_awakening_days: number;
  activity_limitation_days: number;
  rescue_days: number;
  abnormal_lung_days: number;
  compliance: {
    answered_days: number;
    asked_days: number;
    compliant_days: number;
    controller_compliance: number | null;
  };
  eligible: boolean;
  answer_rate: number;
}

export interface CohortResponse {
  season: string;
  patients_analyzed: number;
  identified_count: number;
  major_trigger_distribution: Record<string, number>;
  no_episode_fraction: number;
}

export interface AlertRow {
  patient_id: string;
  kind: string;
  date: string;
  detail: string;
  audience: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    detail: string,
  ) {
    super(detail);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) {
    let kind = "error";
    let detail = `${response.status}`;
    try {
      const body = await response.json();
      kind = body.error ?? kind;
      detail = body.detail ?? detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(response.status, kind, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private url(path: string, params?: Record<string, string | undefined>): string {
    const search = new URLSearchParams();
    for (const [key, value] of Object.entries(params ?? {})) {
      if (value !== undefined && value !== "") search.set(key, value);
    }
    const qs = search.toString();
    return `${this.base}${path}${qs ? `?${qs}` : ""}`;
  }

  getConfig(): Promise<ConfigResponse> {
    return getJson(this.url("/v1/config"));
  }

  getPatients(): Promise<PatientRow[]> {
    return getJson(this.url("/v1/patients"));
  }

  getTimeline(patient: string, from?: string, to?: string): Promise<TimelineResponse> {
    return getJson(this.url(`/v1/patients/${patient}/timeline`, { from, to }));
  }

  getTriggers(patient: string, learningEnd?: string): Promise<TriggersResponse> {
    return getJson(this.url(`/v1/patients/${patient}/triggers`, { learning_end: learningEnd }));
  }

  getSummary(patient: string, from?: string, to?: string): Promise<SummaryResponse> {
    return getJson(this.url(`/v1/patients/${patient}/summary`, { from, to }));
  }

  getCohort(season: string): Promise<CohortResponse> {
    return getJson(this.url("/v1/cohort/triggers", { season }));
  }

  getAlerts(patient?: string): Promise<AlertRow[]> {
    return getJson(this.url("/v1/alerts", { patient_id: patient }));
  }
}
