/** Session flow state: alerts are presented in server order, one submission
 * per alert, and navigation never goes back to a submitted alert. */

import type { Condition, SessionDoc } from "./types.js";

export interface FlowPosition {
  stageIndex: number;
  alertIndex: number;
  condition: Condition;
  alertId: number;
}

export class SessionFlow {
  private submitted = new Set<number>();
  private cursor = 0;
  private order: FlowPosition[] = [];

  constructor(public readonly doc: SessionDoc) {
    doc.stages.forEach((stage, stageIndex) => {
      stage.alert_ids.forEach((alertId, alertIndex) => {
        this.order.push({ stageIndex, alertIndex, condition: stage.condition, alertId });
      });
    });
  }

  get sessionId(): string {
    return this.doc.session_id;
  }

  current(): FlowPosition | null {
    return this.cursor < this.order.length ? this.order[this.cursor] : null;
  }

  isSubmitted(alertId: number): boolean {
    return this.submitted.has(alertId);
  }

  /** Records a submission; repeated submissions for the same alert are
   * rejected locally (the server enforces this too). */
  recordSubmission(alertId: number): void {
    const pos = this.current();
    if (!pos || pos.alertId !== alertId) {
      throw new Error(`alert ${alertId} is not the active alert`);
    }
    if (this.submitted.has(alertId)) {
      throw new Error(`alert ${alertId} already submitted`);
    }
    this.submitted.add(alertId);
  }

  /** Moves to the next unsubmitted alert; only forward movement exists. */
  advance(): FlowPosition | null {
    while (this.cursor < this.order.length && this.submitted.has(this.order[this.cursor].alertId)) {
      this.cursor += 1;
    }
    return this.current();
  }

  /** True when the active stage just finished (time for the questionnaire). */
  stageComplete(stageIndex: number): boolean {
    return this.order
      .filter((p) => p.stageIndex === stageIndex)
      .every((p) => this.submitted.has(p.alertId));
  }

  done(): boolean {
    return this.order.every((p) => this.submitted.has(p.alertId));
  }

  progress(): { submitted: number; total: number } {
    return { submitted: this.submitted.size, total: this.order.length };
  }
}

export interface SubmissionDraft {
  className: string | null;
  confidence: number | null;
  reliance: { features: number | null; explanations: number | null; knowledge: number | null };
}

/** Client-side validation mirroring the server contract: one class, a 0-100
 * confidence, and all three reliance ratings on the 1-5 scale. */
export function validateDraft(draft: SubmissionDraft, classes: string[]): string[] {
  const problems: string[] = [];
  if (!draft.className || !classes.includes(draft.className)) {
    problems.push("choose one of the classes");
  }
  if (draft.confidence === null || draft.confidence < 0 || draft.confidence > 100) {
    problems.push("confidence must be between 0 and 100");
  }
  for (const key of ["features", "explanations", "knowledge"] as const) {
    const value = draft.reliance[key];
    if (value === null || value < 1 || value > 5) {
      problems.push(`rate reliance on ${key} (1-5)`);
    }
  }
  return problems;
}
