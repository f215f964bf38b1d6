/**
 * DOM rendering for the controllers' view models. Browser-only; controllers
 * and API client never touch the DOM, so everything here is replaceable.
 */

import type { RoundEntry, WorkItem } from "./api.js";
import { DME_STATUSES, DR_SEVERITIES, GradingFormState } from "./form.js";
import type { DashboardViewModel, SeniorViewModel } from "./senior.js";
import type { WorklistViewModel } from "./worklist.js";

export interface UiConfig {
  baseUrl: string;
  graderId: string;
  /** Optional template with {image_id}; fixtures carry no images, so the
   * placeholder panel renders when this is unset. */
  imageUrlTemplate?: string;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderImagePanel(item: WorkItem, config: UiConfig): HTMLElement {
  const panel = el("div", "image-panel");
  if (config.imageUrlTemplate) {
    const img = el("img", "fundus");
    img.src = config.imageUrlTemplate.replace("{image_id}", item.image_id);
    img.alt = `fundus image ${item.image_id}`;
    panel.appendChild(img);
  } else {
    panel.appendChild(
      el("div", "image-placeholder", `no image available for ${item.image_id}`),
    );
  }
  return panel;
}

export function renderBanner(message: string | null): HTMLElement | null {
  if (!message) return null;
  const banner = el("div", "banner retry-banner", message);
  return banner;
}

export function renderWorklist(
  model: WorklistViewModel,
  onOpen: (item: WorkItem) => void,
): HTMLElement {
  const root = el("section", "worklist");
  const banner = renderBanner(model.banner);
  if (banner) root.appendChild(banner);
  if (model.empty && model.loaded) {
    root.appendChild(el("p", "empty-state", "no pending adjudications"));
    return root;
  }
  const list = el("ul", "worklist-rows");
  for (const row of model.rows) {
    const li = el("li", "worklist-row");
    li.appendChild(el("span", "image-id", row.item.image_id));
    li.appendChild(el("span", "task", row.item.task));
    li.appendChild(el("span", "round", `round ${row.item.round}`));
    if (row.independent) {
      li.appendChild(
        el("span", "badge independent", "independent — counterpart hidden"),
      );
    } else {
      li.appendChild(
        el("span", "counterpart", `counterpart: ${row.counterpartGrade ?? "n/a"}`),
      );
      for (const comment of row.comments) {
        li.appendChild(el("blockquote", "comment", comment));
      }
    }
    const open = el("button", "open", "grade");
    open.addEventListener("click", () => onOpen(row.item));
    li.appendChild(open);
    list.appendChild(li);
  }
  root.appendChild(list);
  return root;
}

export function renderGradingForm(
  form: GradingFormState,
  onSubmit: () => void,
): HTMLElement {
  const root = el("form", "grading-form");
  root.addEventListener("submit", (event) => event.preventDefault());

  const gradability = el("fieldset", "gradability");
  gradability.appendChild(el("legend", undefined, "gradability"));
  for (const [label, value] of [
    ["gradable", true],
    ["ungradable", false],
  ] as const) {
    const button = el("button", "toggle", label);
    button.type = "button";
    button.addEventListener("click", () => {
      form.gradable = value;
      sync();
    });
    gradability.appendChild(button);
  }
  root.appendChild(gradability);

  if (form.task === "dr") {
    const severities = el("fieldset", "severity");
    severities.appendChild(el("legend", undefined, "DR severity"));
    for (const level of DR_SEVERITIES) {
      const button = el("button", "severity-choice", level);
      button.type = "button";
      button.addEventListener("click", () => {
        form.severity = level;
        sync();
      });
      severities.appendChild(button);
    }
    root.appendChild(severities);
  } else if (form.task === "dme") {
    const dme = el("fieldset", "dme");
    dme.appendChild(el("legend", undefined, "referable DME"));
    for (const status of DME_STATUSES) {
      const button = el("button", "dme-choice", status);
      button.type = "button";
      button.addEventListener("click", () => {
        form.dme = status;
        sync();
      });
      dme.appendChild(button);
    }
    root.appendChild(dme);
  }

  const comment = el("textarea", "comment-input");
  comment.placeholder = "comment for the other specialist";
  comment.value = form.comment;
  comment.addEventListener("input", () => {
    form.comment = comment.value;
  });
  root.appendChild(comment);

  const submit = el("button", "submit", "submit grade");
  submit.type = "submit";
  const blocked = el("p", "blocked-reason");
  const sync = () => {
    submit.disabled = !form.canSubmit();
    blocked.textContent = form.blockedReason() ?? "";
  };
  submit.addEventListener("click", () => {
    if (form.canSubmit()) onSubmit();
  });
  sync();
  root.appendChild(submit);
  root.appendChild(blocked);
  return root;
}

export function renderTimeline(history: RoundEntry[]): HTMLElement {
  const timeline = el("ol", "round-timeline");
  for (const entry of history) {
    const li = el("li", "timeline-entry");
    li.appendChild(el("span", "round", `round ${entry.round}`));
    li.appendChild(el("span", "grader", entry.grader_id));
    li.appendChild(el("span", "value", String(entry.value)));
    if (entry.comment) {
      li.appendChild(el("blockquote", "comment", entry.comment));
    }
    timeline.appendChild(li);
  }
  return timeline;
}

export function renderSeniorView(
  model: SeniorViewModel,
  onOpen: (item: WorkItem) => void,
): HTMLElement {
  const root = el("section", "senior-view");
  if (model.withheld) {
    root.appendChild(
      el("p", "withheld", "tie-break view is available to the senior grader only"),
    );
    return root;
  }
  const banner = renderBanner(model.banner);
  if (banner) root.appendChild(banner);
  if (model.empty) {
    root.appendChild(el("p", "empty-state", "no sessions awaiting tie-break"));
    return root;
  }
  for (const card of model.cards) {
    const node = el("article", "tiebreak-card");
    node.appendChild(el("h3", undefined, card.item.image_id));
    node.appendChild(el("span", "task", card.item.task));
    if (card.blind) {
      node.appendChild(
        el("p", "blind-note", "round history withheld (blind tie-break)"),
      );
    } else {
      node.appendChild(renderTimeline(card.history));
    }
    const open = el("button", "open", "settle");
    open.addEventListener("click", () => onOpen(card.item));
    node.appendChild(open);
    root.appendChild(node);
  }
  return root;
}

export function renderDashboard(model: DashboardViewModel): HTMLElement {
  const root = el("section", "dashboard");
  const banner = renderBanner(model.banner);
  if (banner) root.appendChild(banner);
  root.appendChild(el("h3", undefined, `sessions: ${model.sessions}`));
  const states = el("ul", "state-counts");
  for (const [state, count] of Object.entries(model.states).sort()) {
    states.appendChild(el("li", undefined, `${state}: ${count}`));
  }
  root.appendChild(states);
  const provenance = el("ul", "provenance-counts");
  for (const [kind, count] of Object.entries(model.provenance).sort()) {
    provenance.appendChild(el("li", undefined, `${kind}: ${count}`));
  }
  root.appendChild(provenance);
  const table = el("table", "agreement-table");
  const head = el("tr");
  for (const column of ["task", "adjudicated", "vs regional", "vs algorithm"]) {
    head.appendChild(el("th", undefined, column));
  }
  table.appendChild(head);
  for (const row of model.agreement) {
    const tr = el("tr", "agreement-row");
    tr.appendChild(el("td", undefined, row.task));
    tr.appendChild(el("td", undefined, String(row.n)));
    tr.appendChild(el("td", "regional-pct", row.regionalPct));
    tr.appendChild(el("td", "algorithm-pct", row.algorithmPct));
    table.appendChild(tr);
  }
  root.appendChild(table);
  return root;
}
