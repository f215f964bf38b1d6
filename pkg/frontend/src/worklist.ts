/**
 * Specialist worklist: pending sessions for one grader, oldest first.
 *
 * A failed refresh keeps the previously loaded items on screen behind a
 * retry banner; no typed form state is lost. Round-1 items are explicitly
 * badged as independent, with the counterpart hidden.
 */

import type { ApiClient, WorkItem } from "./api.js";

export interface WorklistRow {
  item: WorkItem;
  independent: boolean; // round 1: counterpart hidden by protocol
  counterpartGrade: string | null;
  comments: string[];
}

export interface WorklistViewModel {
  rows: WorklistRow[];
  empty: boolean;
  banner: string | null; // retry banner when the service is unreachable
  loaded: boolean;
}

export class WorklistController {
  private model: WorklistViewModel = {
    rows: [],
    empty: true,
    banner: null,
    loaded: false,
  };

  constructor(
    private readonly api: ApiClient,
    readonly graderId: string,
  ) {}

  view(): WorklistViewModel {
    return this.model;
  }

  async refresh(): Promise<WorklistViewModel> {
    const result = await this.api.listWork(this.graderId);
    if (result.kind === "unreachable") {
      this.model = { ...this.model, banner: "service unreachable, retry" };
      return this.model;
    }
    if (result.kind === "error") {
      this.model = { ...this.model, banner: result.error.message };
      return this.model;
    }
    const rows = result.value.map((item) => ({
      item,
      independent: item.round === 1,
      counterpartGrade:
        item.visible_counterpart_grade === null
          ? null
          : String(item.visible_counterpart_grade),
      comments: item.visible_comments,
    }));
    this.model = { rows, empty: rows.length === 0, banner: null, loaded: true };
    return this.model;
  }
}
