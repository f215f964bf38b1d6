/**
 * Grading form state and validation.
 *
 * The form mirrors the standard grading protocol: the grader first marks
 * whether the image is gradable for the task, then (when gradable) picks a
 * severity or DME call. Submission stays disabled until those choices are
 * complete. Every logical submission carries one request token; retries and
 * double clicks reuse it (the service treats it idempotently) and a fresh
 * token is minted only when the form moves on to a new submission.
 */

import type { GradeValue } from "./api.js";
import { freshToken } from "./tokens.js";

export const DR_SEVERITIES = [
  "no_dr",
  "mild",
  "moderate",
  "severe",
  "proliferative",
] as const;
export type DrSeverity = (typeof DR_SEVERITIES)[number];

export const DME_STATUSES = ["absent", "referable"] as const;
export type DmeStatus = (typeof DME_STATUSES)[number];

export type TaskName = "dr" | "dme" | "dr_gradability" | "dme_gradability";

export class GradingFormState {
  severity: DrSeverity | null = null;
  dme: DmeStatus | null = null;
  gradable: boolean | null = null;
  comment = "";
  requestToken: string;

  constructor(readonly task: TaskName) {
    this.requestToken = freshToken();
  }

  /** Submit stays disabled until gradability is set and, when gradable, a
   * severity/DME choice exists. Severity sessions additionally need the
   * image gradable, since gradability disputes are adjudicated separately. */
  canSubmit(): boolean {
    if (this.gradable === null) {
      return false;
    }
    if (this.task === "dr_gradability" || this.task === "dme_gradability") {
      return true;
    }
    if (!this.gradable) {
      return false;
    }
    return this.task === "dr" ? this.severity !== null : this.dme !== null;
  }

  /** Why submission is currently blocked, for inline display. */
  blockedReason(): string | null {
    if (this.canSubmit()) {
      return null;
    }
    if (this.gradable === null) {
      return "mark the image gradable or ungradable first";
    }
    if (!this.gradable && (this.task === "dr" || this.task === "dme")) {
      return "severity sessions need a gradable image; gradability disputes are adjudicated separately";
    }
    return this.task === "dr" ? "pick a severity level" : "pick a DME call";
  }

  valueForSubmission(): GradeValue {
    if (!this.canSubmit()) {
      throw new Error(`form not submittable: ${this.blockedReason()}`);
    }
    if (this.task === "dr_gradability" || this.task === "dme_gradability") {
      return this.gradable as boolean;
    }
    return this.task === "dr"
      ? (this.severity as DrSeverity)
      : (this.dme as DmeStatus);
  }

  /** After a completed submission (or a conflict reload) the next attempt is
   * a new logical submission and must carry a new token. The typed comment
   * survives; the choices reset so the grader re-confirms against the newly
   * visible counterpart grade. */
  advance(preserveChoices = false): void {
    this.requestToken = freshToken();
    if (!preserveChoices) {
      this.severity = null;
      this.dme = null;
      this.gradable = null;
    }
  }
}
