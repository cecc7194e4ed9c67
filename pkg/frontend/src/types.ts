/** Payload shapes of the triage service API. */

export type Condition = "C1" | "C2" | "C3";

export interface FeatureView {
  name: string;
  value: number;
  mean: number;
  median: number;
  mode: number;
  category: string;
  suggested?: boolean;
}

export interface SessionStage {
  condition: Condition;
  alert_ids: number[];
}

export interface SessionDoc {
  session_id: string;
  stages: SessionStage[];
  classes: string[];
}

export interface AlertFeaturesDoc {
  alert_id: number;
  condition: Condition;
  features: FeatureView[];
  suggested_categories: string[];
  catalog?: { id: number; name: string; features: string[] }[];
}

export interface SuggestionDoc {
  categories: number[];
  category_names: string[];
  found: boolean;
}

export interface ExplanationDoc {
  alert_id: number;
  shapley: {
    method: string;
    attributions: Record<string, Record<string, number>>;
    baseline: Record<string, number>;
    full: Record<string, number>;
  };
  evidence: {
    mask: number;
    contributions: Record<string, Record<string, number>>;
    summaries: Record<string, number>;
    stats: Record<string, { mean: number; median: number; mode: number }>;
  };
}

export interface RelianceRatings {
  features: number;
  explanations: number;
  knowledge: number;
}

export interface ClassificationSubmission {
  class: string;
  confidence: number;
  reliance: RelianceRatings;
}

export interface ClassificationAck {
  status: string;
  elapsed_seconds: number;
}
