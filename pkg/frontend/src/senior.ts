/**
 * Senior tie-break view and the progress dashboard.
 *
 * The tie-break queue lists only deadlocked sessions (the service already
 * filters the senior's worklist to those). Each card carries the full round
 * history as a per-round timeline when the service is configured to show it.
 * The dashboard renders /progress: state and provenance counts plus the
 * per-task agreement rates of the closed sessions against the recorded
 * regional and algorithm calls.
 */

import type { ApiClient, Progress, RoundEntry, WorkItem } from "./api.js";

export interface TieBreakCard {
  item: WorkItem;
  history: RoundEntry[]; // chronological; empty when the senior is blind
  blind: boolean;
}

export interface SeniorViewModel {
  cards: TieBreakCard[];
  empty: boolean;
  banner: string | null;
  withheld: boolean; // non-senior accounts get no tie-break view
}

export class SeniorController {
  private model: SeniorViewModel = {
    cards: [],
    empty: true,
    banner: null,
    withheld: false,
  };

  constructor(
    private readonly api: ApiClient,
    readonly graderId: string,
  ) {}

  view(): SeniorViewModel {
    return this.model;
  }

  async refresh(): Promise<SeniorViewModel> {
    const result = await this.api.listWork(this.graderId);
    if (result.kind === "unreachable") {
      this.model = { ...this.model, banner: "service unreachable, retry" };
      return this.model;
    }
    if (result.kind === "error") {
      // authorization failure: the view is withheld entirely
      this.model = {
        cards: [],
        empty: true,
        banner: result.error.message,
        withheld: result.status === 403,
      };
      return this.model;
    }
    const cards: TieBreakCard[] = [];
    for (const item of result.value) {
      const detail = await this.api.getSession(item.session_id, this.graderId);
      const history =
        detail.kind === "ok"
          ? [...detail.value.rounds].sort((a, b) => a.round - b.round)
          : [];
      cards.push({ item, history, blind: history.length === 0 });
    }
    this.model = { cards, empty: cards.length === 0, banner: null, withheld: false };
    return this.model;
  }
}

export interface AgreementRow {
  task: string;
  n: number;
  regionalPct: string; // "28.5%" style, one decimal
  algorithmPct: string;
}

export interface DashboardViewModel {
  sessions: number;
  states: Record<string, number>;
  provenance: Record<string, number>;
  agreement: AgreementRow[];
  banner: string | null;
}

export function formatPct(rate: number | null): string {
  return rate === null ? "n/a" : `${(100 * rate).toFixed(1)}%`;
}

export class DashboardController {
  private model: DashboardViewModel = {
    sessions: 0,
    states: {},
    provenance: {},
    agreement: [],
    banner: null,
  };

  constructor(private readonly api: ApiClient) {}

  view(): DashboardViewModel {
    return this.model;
  }

  async refresh(): Promise<DashboardViewModel> {
    const result = await this.api.progress();
    if (result.kind !== "ok") {
      const banner =
        result.kind === "unreachable"
          ? "service unreachable, retry"
          : result.error.message;
      this.model = { ...this.model, banner };
      return this.model;
    }
    const progress: Progress = result.value;
    const agreement = Object.entries(progress.agreement)
      .sort(([a], [b]) => a.localeCompare(b))
      .map(([task, rates]) => ({
        task,
        n: rates.n,
        regionalPct: formatPct(rates.regional),
        algorithmPct: formatPct(rates.algorithm),
      }));
    this.model = {
      sessions: progress.sessions,
      states: progress.states,
      provenance: progress.provenance,
      agreement,
      banner: null,
    };
    return this.model;
  }
}
