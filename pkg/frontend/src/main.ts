/** Dashboard bootstrap: drives one participant session through its
 * conditions, one alert at a time, against the triage service. */

import { ApiError, TriageApi, maskHex } from "./api.js";
import { SessionFlow } from "./session.js";
import type { SubmissionDraft } from "./session.js";
import { AlertTimer } from "./timer.js";
import type { AlertFeaturesDoc } from "./types.js";
import {
  COGNITIVE_LOAD_ITEMS,
  TRUST_ITEMS,
  el,
  renderExplanationPanel,
  renderFeatureTable,
  renderFilterPanel,
  renderQuestionnaire,
  renderSubmissionForm,
  renderSuggestionBanner,
  renderTimer,
} from "./views.js";

const api = new TriageApi("");

async function showAlert(flow: SessionFlow, root: HTMLElement): Promise<void> {
  const pos = flow.current();
  if (!pos) {
    root.replaceChildren(el("h2", undefined, "session complete, thank you"));
    return;
  }
  root.replaceChildren(el("h2", undefined,
    `condition ${pos.condition} - alert ${pos.alertId}`));

  const timer = new AlertTimer();
  const doc = await api.alertFeatures(pos.alertId, flow.sessionId);
  timer.start();

  const timerNode = renderTimer(timer.display());
  root.appendChild(timerNode);
  const ticker = setInterval(() => {
    timerNode.textContent = timer.display();
  }, 1000);

  root.appendChild(renderSuggestionBanner(doc));
  const featureHost = el("div", "feature-host");
  featureHost.appendChild(renderFeatureTable(doc.features));
  root.appendChild(featureHost);

  const suggestion = await api.suggestion(pos.alertId);
  const nCategories = doc.catalog?.length ?? suggestion.category_names.length;
  const explanationHost = el("div", "explanation-host");
  root.appendChild(explanationHost);

  async function refreshExplanation(categories: number[]): Promise<void> {
    const explanation = await api.explanation(
      pos!.alertId, maskHex(categories, Math.max(nCategories, 1)));
    explanationHost.replaceChildren(
      renderExplanationPanel(explanation, flow.doc.classes));
  }
  await refreshExplanation(suggestion.categories);

  if (pos.condition === "C3" && doc.catalog) {
    const selected = new Set(suggestion.categories);
    root.appendChild(renderFilterPanel(doc.catalog, selected, (id, enabled) => {
      if (enabled) selected.add(id);
      else selected.delete(id);
      void refreshExplanation([...selected]);
      filterFeatures(featureHost, doc, selected);
    }));
  }

  root.appendChild(renderSubmissionForm(flow.doc.classes, {
    onSubmit: (draft: SubmissionDraft) => {
      void submit(flow, pos.alertId, draft, timer, root).finally(() =>
        clearInterval(ticker));
    },
  }));
}

function filterFeatures(
  host: HTMLElement,
  doc: AlertFeaturesDoc,
  selected: Set<number>,
): void {
  const names = new Set(
    (doc.catalog ?? [])
      .filter((c) => selected.has(c.id))
      .flatMap((c) => c.features),
  );
  const visible = doc.features.filter(
    (f) => f.category === "initial" || names.has(f.name));
  host.replaceChildren(renderFeatureTable(visible));
}

async function submit(
  flow: SessionFlow,
  alertId: number,
  draft: SubmissionDraft,
  timer: AlertTimer,
  root: HTMLElement,
): Promise<void> {
  timer.stop();
  const ack = await submitWithRetry(flow, alertId, draft);
  if (ack) timer.reconcile(ack.elapsed_seconds);
  const stageIndex = flow.current()!.stageIndex;
  flow.recordSubmission(alertId);
  flow.advance();

  if (flow.stageComplete(stageIndex) && !flow.done()) {
    await runQuestionnaire(flow, root);
  }
  if (flow.done()) {
    await runQuestionnaire(flow, root);
    root.replaceChildren(el("h2", undefined, "session complete, thank you"));
    return;
  }
  await showAlert(flow, root);
}

/** Network failures retry; a 409 means the server already holds the record
 * (the retry raced an earlier delivery), so it counts as submitted. */
export async function deliverClassification(
  client: TriageApi,
  sessionId: string,
  alertId: number,
  draft: SubmissionDraft,
  delayMs = 500,
): Promise<{ elapsed_seconds: number } | null> {
  const body = {
    class: draft.className!,
    confidence: draft.confidence!,
    reliance: {
      features: draft.reliance.features!,
      explanations: draft.reliance.explanations!,
      knowledge: draft.reliance.knowledge!,
    },
  };
  for (let attempt = 0; attempt < 3; attempt++) {
    try {
      return await client.submitClassification(alertId, sessionId, body);
    } catch (error) {
      if (error instanceof ApiError) {
        if (error.status === 409) return null; // already recorded server-side
        throw error;
      }
      // network failure: wait briefly and retry the idempotent post
      await new Promise((resolve) => setTimeout(resolve, delayMs * (attempt + 1)));
    }
  }
  throw new Error("classification could not be delivered");
}

function submitWithRetry(
  flow: SessionFlow,
  alertId: number,
  draft: SubmissionDraft,
): Promise<{ elapsed_seconds: number } | null> {
  return deliverClassification(api, flow.sessionId, alertId, draft);
}

async function runQuestionnaire(flow: SessionFlow, root: HTMLElement): Promise<void> {
  return new Promise((resolve) => {
    const trust = renderQuestionnaire("trust in the assistant (1-7)", TRUST_ITEMS);
    const load = renderQuestionnaire("perceived cognitive load (1-7)", COGNITIVE_LOAD_ITEMS);
    const done = el("button", "submit-button", "submit questionnaire") as HTMLButtonElement;
    done.addEventListener("click", () => {
      done.disabled = true;
      void api
        .submitQuestionnaire(flow.sessionId, trust.answers(), load.answers())
        .then(() => resolve());
    });
    root.replaceChildren(trust.node, load.node, done);
  });
}

export async function boot(root: HTMLElement): Promise<void> {
  const doc = await api.createSession();
  const flow = new SessionFlow(doc);
  await showAlert(flow, root);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot(document.getElementById("app")!);
}
