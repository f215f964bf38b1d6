/**
 * Browser entry point. Configuration comes from the query string:
 *
 *   index.html?base=http://127.0.0.1:8700&grader=alice[&view=senior][&image=...]
 *
 * Specialists get the worklist + grading form; the senior gets the tie-break
 * queue and everyone gets the progress dashboard underneath.
 */

import { ApiClient, WorkItem } from "./api.js";
import { SubmissionController } from "./grading.js";
import {
  renderBanner,
  renderDashboard,
  renderGradingForm,
  renderImagePanel,
  renderSeniorView,
  renderWorklist,
  UiConfig,
} from "./render.js";
import { DashboardController, SeniorController } from "./senior.js";
import { WorklistController } from "./worklist.js";

function config(): UiConfig {
  const params = new URLSearchParams(window.location.search);
  return {
    baseUrl: params.get("base") ?? "http://127.0.0.1:8700",
    graderId: params.get("grader") ?? "",
    imageUrlTemplate: params.get("image") ?? undefined,
  };
}

async function main(): Promise<void> {
  const ui = config();
  const root = document.getElementById("app") ?? document.body;
  if (!ui.graderId) {
    root.appendChild(
      renderBanner("missing ?grader=<id> in the URL") as HTMLElement,
    );
    return;
  }
  const api = new ApiClient(ui.baseUrl);
  const params = new URLSearchParams(window.location.search);
  const seniorMode = params.get("view") === "senior";

  const dashboard = new DashboardController(api);
  const dashboardHost = document.createElement("div");

  const workHost = document.createElement("div");
  root.appendChild(workHost);
  root.appendChild(dashboardHost);

  const redrawDashboard = async () => {
    dashboardHost.replaceChildren(renderDashboard(await dashboard.refresh()));
  };

  if (seniorMode) {
    const senior = new SeniorController(api, ui.graderId);
    const redraw = async () => {
      workHost.replaceChildren(
        renderSeniorView(await senior.refresh(), openItem),
      );
      await redrawDashboard();
    };
    const openItem = (item: WorkItem) => openForm(item, redraw);
    await redraw();
  } else {
    const worklist = new WorklistController(api, ui.graderId);
    const redraw = async () => {
      workHost.replaceChildren(
        renderWorklist(await worklist.refresh(), openItem),
      );
      await redrawDashboard();
    };
    const openItem = (item: WorkItem) => openForm(item, redraw);
    await redraw();
  }

  function openForm(item: WorkItem, redraw: () => Promise<void>): void {
    const controller = new SubmissionController(api, ui.graderId, item);
    const overlay = document.createElement("div");
    overlay.className = "grading-overlay";
    overlay.appendChild(renderImagePanel(item, ui));
    overlay.appendChild(
      renderGradingForm(controller.form, async () => {
        const outcome = await controller.submit();
        const note = document.createElement("p");
        note.className = `outcome ${outcome.kind}`;
        note.textContent =
          outcome.kind === "accepted"
            ? outcome.toast
            : outcome.kind === "conflict"
              ? `state changed: ${outcome.message}`
              : outcome.message;
        overlay.appendChild(note);
        if (outcome.kind === "accepted") {
          overlay.remove();
          await redraw();
        } else if (outcome.kind === "conflict") {
          await redraw();
        }
      }),
    );
    root.appendChild(overlay);
  }
}

main().catch((err) => {
  document.body.appendChild(
    renderBanner(`startup failed: ${err}`) as HTMLElement,
  );
});
