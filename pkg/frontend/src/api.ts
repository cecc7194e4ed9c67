/** Thin typed client over the triage service. The fetch function is
 * injectable so tests can run against fixtures. */

import type {
  AlertFeaturesDoc,
  ClassificationAck,
  ClassificationSubmission,
  ExplanationDoc,
  SessionDoc,
  SuggestionDoc,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class TriageApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        detail = (await response.json()).detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return response.json() as Promise<T>;
  }

  createSession(condition?: string): Promise<SessionDoc> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(condition ? { condition } : {}),
    });
  }

  alertFeatures(alertId: number, sessionId: string): Promise<AlertFeaturesDoc> {
    return this.request(`/alerts/${alertId}/features?session=${encodeURIComponent(sessionId)}`);
  }

  suggestion(alertId: number): Promise<SuggestionDoc> {
    return this.request(`/alerts/${alertId}/suggestion`);
  }

  explanation(alertId: number, maskHex: string): Promise<ExplanationDoc> {
    return this.request(`/alerts/${alertId}/explanation?mask=${maskHex}`);
  }

  submitClassification(
    alertId: number,
    sessionId: string,
    body: ClassificationSubmission,
  ): Promise<ClassificationAck> {
    return this.request(
      `/alerts/${alertId}/classification?session=${encodeURIComponent(sessionId)}`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
  }

  submitQuestionnaire(
    sessionId: string,
    trust: Record<string, number>,
    cognitiveLoad: Record<string, number>,
  ): Promise<{ status: string }> {
    return this.request(`/sessions/${sessionId}/questionnaire`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ trust, cognitive_load: cognitiveLoad }),
    });
  }
}

/** Category mask as the hex string the explanation endpoint expects. */
export function maskHex(categoryIds: number[], nCategories: number): string {
  let mask = 0;
  for (const k of categoryIds) mask |= 1 << k;
  const width = Math.max(1, Math.ceil(nCategories / 4));
  return mask.toString(16).padStart(width, "0");
}
