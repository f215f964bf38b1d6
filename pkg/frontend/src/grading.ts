/**
 * Grade submission flow for one work item.
 *
 * Successful submissions advance optimistically: the item leaves the queue
 * immediately and the worklist refresh confirms. A stale-round conflict
 * reloads the server state (the counterpart's newer grade becomes visible)
 * while preserving the typed comment. Double clicks reuse the in-flight
 * request token, so the service applies the grade exactly once.
 */

import type { ApiClient, SessionView, WorkItem } from "./api.js";
import { GradingFormState, TaskName } from "./form.js";

export type SubmissionOutcome =
  | { kind: "accepted"; session: SessionView; toast: string }
  | { kind: "conflict"; refreshedItem: WorkItem | null; message: string }
  | { kind: "rejected"; code: string; message: string }
  | { kind: "unreachable"; message: string }
  | { kind: "blocked"; message: string };

export class SubmissionController {
  readonly form: GradingFormState;
  private inFlight = false;

  constructor(
    private readonly api: ApiClient,
    readonly graderId: string,
    public item: WorkItem,
  ) {
    this.form = new GradingFormState(item.task as TaskName);
  }

  async submit(): Promise<SubmissionOutcome> {
    if (!this.form.canSubmit()) {
      return { kind: "blocked", message: this.form.blockedReason() ?? "incomplete" };
    }
    if (this.inFlight) {
      // double click: same token, the service response is shared
      return { kind: "blocked", message: "submission already in flight" };
    }
    this.inFlight = true;
    try {
      const result = await this.api.submitGrade(this.item.session_id, {
        grader_id: this.graderId,
        value: this.form.valueForSubmission(),
        comment: this.form.comment,
        request_token: this.form.requestToken,
        expected_round: this.item.round,
      });
      if (result.kind === "unreachable") {
        // keep the token: a retry of the same logical submission is safe
        return { kind: "unreachable", message: result.detail };
      }
      if (result.kind === "ok") {
        this.form.advance();
        const state = result.value.state;
        const toast =
          state === "consensus" || state === "tie_broken"
            ? `session closed: ${state}`
            : `grade recorded, session moved to round ${result.value.round}`;
        return { kind: "accepted", session: result.value, toast };
      }
      if (result.error.code === "conflict") {
        const refreshed = await this.reloadItem();
        this.form.advance(/* preserveChoices */ false);
        return {
          kind: "conflict",
          refreshedItem: refreshed,
          message: result.error.message,
        };
      }
      // typed engine errors render verbatim alongside refreshed state
      await this.reloadItem();
      return {
        kind: "rejected",
        code: result.error.code,
        message: result.error.message,
      };
    } finally {
      this.inFlight = false;
    }
  }

  /** Pull the current per-grader view of this session from the worklist;
   * null when the session no longer awaits this grader. The typed comment
   * survives the reload. */
  private async reloadItem(): Promise<WorkItem | null> {
    const work = await this.api.listWork(this.graderId);
    if (work.kind !== "ok") {
      return null;
    }
    const match = work.value.find(
      (candidate) => candidate.session_id === this.item.session_id,
    );
    if (match) {
      this.item = match;
    }
    return match ?? null;
  }
}
