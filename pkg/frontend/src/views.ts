/** DOM builders for the dashboard panels. Everything renders into plain
 * elements; the payload decides what is visible (in C2 the service omits
 * non-suggested feature values, so they can never reach the DOM). */

import type { AlertFeaturesDoc, ExplanationDoc, FeatureView } from "./types.js";
import type { SubmissionDraft } from "./session.js";
import { validateDraft } from "./session.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

const fmt = (x: number): string =>
  Math.abs(x) >= 1000 ? x.toFixed(0) : Math.abs(x) >= 1 ? x.toFixed(3) : x.toFixed(5);

/** Feature table: current value next to the historical mean/median/mode. */
export function renderFeatureTable(features: FeatureView[]): HTMLTableElement {
  const table = el("table", "feature-table");
  const head = table.createTHead().insertRow();
  for (const title of ["feature", "value", "mean", "median", "mode", "category"]) {
    head.appendChild(el("th", undefined, title));
  }
  const body = table.createTBody();
  for (const f of features) {
    const row = body.insertRow();
    row.className = f.suggested ? "feature-row suggested" : "feature-row";
    row.dataset.feature = f.name;
    row.insertCell().textContent = f.name;
    row.insertCell().textContent = fmt(f.value);
    row.insertCell().textContent = fmt(f.mean);
    row.insertCell().textContent = fmt(f.median);
    row.insertCell().textContent = fmt(f.mode);
    row.insertCell().textContent = f.category;
  }
  return table;
}

export function renderSuggestionBanner(doc: AlertFeaturesDoc): HTMLElement {
  const banner = el("div", "suggestion-banner");
  if (doc.suggested_categories.length === 0) {
    banner.appendChild(el("span", "no-suggestion",
      "no context suggestion for this alert"));
    return banner;
  }
  banner.appendChild(el("span", undefined, "suggested context: "));
  for (const name of doc.suggested_categories) {
    banner.appendChild(el("span", "suggestion-chip", name));
  }
  return banner;
}

/** Signed per-feature evidence bars per class, plus per-class summary rows.
 * An all-zero attribution renders the empty-evidence state instead of bars. */
export function renderExplanationPanel(
  explanation: ExplanationDoc,
  classes: string[],
): HTMLElement {
  const panel = el("div", "explanation-panel");
  panel.appendChild(el("h3", undefined, "evidence per class"));

  const legend = el("div", "legend");
  legend.appendChild(el("span", "legend-positive", "supports the class"));
  legend.appendChild(el("span", "legend-negative", "speaks against it"));
  panel.appendChild(legend);

  const summaries = el("div", "class-summaries");
  for (const cls of classes) {
    const total = explanation.evidence.summaries[cls] ?? 0;
    const row = el("div", "summary-row");
    row.dataset.class = cls;
    row.appendChild(el("span", "summary-class", cls));
    row.appendChild(el("span", total >= 0 ? "summary-positive" : "summary-negative",
      fmt(total)));
    summaries.appendChild(row);
  }
  panel.appendChild(summaries);

  let anyEvidence = false;
  const maxAbs = Math.max(
    1e-12,
    ...classes.flatMap((cls) =>
      Object.values(explanation.evidence.contributions[cls] ?? {}).map(Math.abs)),
  );
  for (const cls of classes) {
    const contributions = Object.entries(explanation.evidence.contributions[cls] ?? {})
      .filter(([, v]) => v !== 0)
      .sort((a, b) => Math.abs(b[1]) - Math.abs(a[1]))
      .slice(0, 8);
    if (contributions.length === 0) continue;
    anyEvidence = true;
    const block = el("div", "class-evidence");
    block.dataset.class = cls;
    block.appendChild(el("h4", undefined, cls));
    for (const [feature, value] of contributions) {
      const row = el("div", "evidence-row");
      row.appendChild(el("span", "evidence-feature", feature));
      const bar = el("div", value >= 0 ? "bar positive" : "bar negative");
      bar.style.width = `${Math.round((Math.abs(value) / maxAbs) * 100)}%`;
      bar.title = fmt(value);
      row.appendChild(bar);
      row.appendChild(el("span", "evidence-value", fmt(value)));
      block.appendChild(row);
    }
    panel.appendChild(block);
  }
  if (!anyEvidence) {
    panel.appendChild(el("div", "empty-evidence",
      "no feature moves the prediction for this context selection"));
  }
  return panel;
}

/** C3-only panel: toggle between all features, the suggested subset, or a
 * custom category selection; the host refetches explanations per mask. */
export function renderFilterPanel(
  catalog: { id: number; name: string; features: string[] }[],
  selected: Set<number>,
  onToggle: (categoryId: number, enabled: boolean) => void,
): HTMLElement {
  const panel = el("div", "filter-panel");
  panel.appendChild(el("h3", undefined, "context filter"));
  for (const category of catalog) {
    const label = el("label", "filter-item");
    const box = el("input") as HTMLInputElement;
    box.type = "checkbox";
    box.checked = selected.has(category.id);
    box.dataset.categoryId = String(category.id);
    box.addEventListener("change", () => onToggle(category.id, box.checked));
    label.appendChild(box);
    label.appendChild(el("span", undefined, `${category.name} (${category.features.length})`));
    panel.appendChild(label);
  }
  return panel;
}

export interface SubmissionHandlers {
  onSubmit: (draft: SubmissionDraft) => void;
}

/** Classification form: one class, confidence 0-100, reliance ratings 1-5.
 * Validation problems render inline; the submit button locks after a valid
 * submission so double clicks cannot produce two records. */
export function renderSubmissionForm(
  classes: string[],
  handlers: SubmissionHandlers,
): HTMLElement {
  const form = el("div", "submission-form");
  form.appendChild(el("h3", undefined, "classification"));

  const classBlock = el("div", "class-choices");
  for (const cls of classes) {
    const label = el("label", "class-choice");
    const radio = el("input") as HTMLInputElement;
    radio.type = "radio";
    radio.name = "alert-class";
    radio.value = cls;
    label.appendChild(radio);
    label.appendChild(el("span", undefined, cls));
    classBlock.appendChild(label);
  }
  form.appendChild(classBlock);

  const confidence = el("input", "confidence-input") as HTMLInputElement;
  confidence.type = "number";
  confidence.min = "0";
  confidence.max = "100";
  confidence.placeholder = "confidence 0-100";
  form.appendChild(confidence);

  const relianceInputs: Record<string, HTMLSelectElement> = {};
  for (const key of ["features", "explanations", "knowledge"]) {
    const label = el("label", "reliance-item", `reliance on ${key}: `);
    const select = el("select") as HTMLSelectElement;
    select.appendChild(el("option", undefined, "-"));
    for (let v = 1; v <= 5; v++) {
      const option = el("option", undefined, String(v)) as HTMLOptionElement;
      option.value = String(v);
      select.appendChild(option);
    }
    relianceInputs[key] = select;
    label.appendChild(select);
    form.appendChild(label);
  }

  const problems = el("div", "validation-problems");
  form.appendChild(problems);

  const button = el("button", "submit-button", "submit classification") as HTMLButtonElement;
  button.addEventListener("click", () => {
    if (button.disabled) return;
    const chosen = form.querySelector<HTMLInputElement>("input[name=alert-class]:checked");
    const draft: SubmissionDraft = {
      className: chosen ? chosen.value : null,
      confidence: confidence.value === "" ? null : Number(confidence.value),
      reliance: {
        features: numberOrNull(relianceInputs.features.value),
        explanations: numberOrNull(relianceInputs.explanations.value),
        knowledge: numberOrNull(relianceInputs.knowledge.value),
      },
    };
    const issues = validateDraft(draft, classes);
    problems.replaceChildren(...issues.map((p) => el("div", "problem", p)));
    if (issues.length > 0) return;
    button.disabled = true;
    handlers.onSubmit(draft);
  });
  form.appendChild(button);
  return form;
}

function numberOrNull(value: string): number | null {
  const n = Number(value);
  return Number.isFinite(n) && value !== "" && value !== "-" ? n : null;
}

export function renderTimer(display: string): HTMLElement {
  const node = el("span", "alert-timer", display);
  node.dataset.role = "timer";
  return node;
}

export const TRUST_ITEMS = [
  "the assistant could mislead me",
  "the assistant behaves in an underhanded manner",
  "I am suspicious of the assistant's outputs",
  "I am wary of the assistant",
  "the assistant's actions could have a harmful outcome",
  "I am confident in the assistant",
  "the assistant is dependable",
  "the assistant is reliable",
  "I can trust the assistant",
  "I am familiar with the assistant",
];

export const COGNITIVE_LOAD_ITEMS = [
  "many things needed to be kept in mind simultaneously",
  "this task was very complex",
  "I made an effort to understand the overall context",
  "my point was to understand everything correctly",
  "the task supported my comprehension",
  "it was exhausting to find the important information",
  "the design of this task was inconvenient for learning",
  "it was difficult to recognise and link the crucial information",
];

/** Seven-point questionnaire block; returns the node plus an answer reader. */
export function renderQuestionnaire(
  title: string,
  items: string[],
): { node: HTMLElement; answers: () => Record<string, number> } {
  const block = el("div", "questionnaire");
  block.appendChild(el("h3", undefined, title));
  const selects: [string, HTMLSelectElement][] = [];
  for (const item of items) {
    const row = el("label", "questionnaire-item", item + " ");
    const select = el("select") as HTMLSelectElement;
    for (let v = 1; v <= 7; v++) {
      const option = el("option", undefined, String(v)) as HTMLOptionElement;
      option.value = String(v);
      select.appendChild(option);
    }
    row.appendChild(select);
    block.appendChild(row);
    selects.push([item, select]);
  }
  return {
    node: block,
    answers: () => Object.fromEntries(selects.map(([item, s]) => [item, Number(s.value)])),
  };
}
