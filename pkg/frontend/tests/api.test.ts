import { describe, expect, it } from "vitest";

import { ApiError, TriageApi, maskHex } from "../src/api.js";

function fakeFetch(routes: Record<string, unknown>) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    if (url in routes) {
      return new Response(JSON.stringify(routes[url]), { status: 200 });
    }
    return new Response(JSON.stringify({ detail: "missing" }), { status: 404 });
  };
  return { fetchFn, calls };
}

describe("maskHex", () => {
  it("encodes category sets as padded hex", () => {
    expect(maskHex([0, 2], 4)).toBe("5");
    expect(maskHex([], 4)).toBe("0");
    expect(maskHex([8, 0], 9)).toBe("101");
  });
});

describe("TriageApi", () => {
  it("creates sessions and fetches per-session features", async () => {
    const { fetchFn, calls } = fakeFetch({
      "/sessions": { session_id: "abc", stages: [], classes: ["x"] },
      "/alerts/3/features?session=abc": {
        alert_id: 3, condition: "C1", features: [], suggested_categories: [],
      },
    });
    const api = new TriageApi("", fetchFn);
    const session = await api.createSession();
    expect(session.session_id).toBe("abc");
    const doc = await api.alertFeatures(3, session.session_id);
    expect(doc.alert_id).toBe(3);
    expect(calls[0].init?.method).toBe("POST");
  });

  it("posts classification bodies verbatim", async () => {
    const { fetchFn, calls } = fakeFetch({
      "/alerts/5/classification?session=s": { status: "recorded", elapsed_seconds: 2.5 },
    });
    const api = new TriageApi("", fetchFn);
    const ack = await api.submitClassification(5, "s", {
      class: "benign",
      confidence: 60,
      reliance: { features: 4, explanations: 2, knowledge: 1 },
    });
    expect(ack.elapsed_seconds).toBe(2.5);
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body.class).toBe("benign");
    expect(body.reliance.knowledge).toBe(1);
  });

  it("raises ApiError with the server detail", async () => {
    const { fetchFn } = fakeFetch({});
    const api = new TriageApi("", fetchFn);
    await expect(api.suggestion(99)).rejects.toThrowError(ApiError);
  });
});
