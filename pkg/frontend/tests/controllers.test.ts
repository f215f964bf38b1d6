import { describe, expect, it } from "vitest";

import { ApiClient, WorkItem } from "../src/api.js";
import { SubmissionController } from "../src/grading.js";
import { DashboardController, formatPct, SeniorController } from "../src/senior.js";
import { WorklistController } from "../src/worklist.js";

type Handler = (url: string, init?: RequestInit) => Response | Promise<Response>;

function stubClient(handler: Handler): ApiClient {
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) =>
    handler(String(input), init)) as typeof fetch;
  return new ApiClient("http://svc", fetchFn);
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

const round1Item: WorkItem = {
  session_id: "dr:img1",
  image_id: "img1",
  task: "dr",
  round: 1,
  visible_counterpart_grade: null,
  visible_comments: [],
};

describe("WorklistController", () => {
  it("marks round-1 rows independent and keeps items behind a retry banner", async () => {
    let fail = false;
    const api = stubClient((url) => {
      if (fail) throw new Error("connection refused");
      expect(url).toContain("/graders/alice/work");
      return json([round1Item]);
    });
    const worklist = new WorklistController(api, "alice");
    const model = await worklist.refresh();
    expect(model.rows).toHaveLength(1);
    expect(model.rows[0]!.independent).toBe(true);
    expect(model.rows[0]!.counterpartGrade).toBeNull();

    fail = true;
    const degraded = await worklist.refresh();
    expect(degraded.banner).toMatch(/unreachable/);
    expect(degraded.rows).toHaveLength(1); // no state loss
  });

  it("reports an explicit empty state", async () => {
    const api = stubClient(() => json([]));
    const model = await new WorklistController(api, "alice").refresh();
    expect(model.empty).toBe(true);
    expect(model.banner).toBeNull();
  });

  it("exposes counterpart grade and comments on revision rounds", async () => {
    const api = stubClient(() =>
      json([
        {
          ...round1Item,
          round: 2,
          visible_counterpart_grade: "severe",
          visible_comments: ["looks proliferative to me"],
        },
      ]),
    );
    const model = await new WorklistController(api, "alice").refresh();
    expect(model.rows[0]!.independent).toBe(false);
    expect(model.rows[0]!.counterpartGrade).toBe("severe");
    expect(model.rows[0]!.comments).toContain("looks proliferative to me");
  });
});

describe("SubmissionController", () => {
  it("sends the expected round and token, then advances optimistically", async () => {
    const bodies: Array<Record<string, unknown>> = [];
    const api = stubClient((url, init) => {
      if (url.endsWith("/grades")) {
        bodies.push(JSON.parse(String(init?.body)));
        return json({
          session_id: "dr:img1",
          image_id: "img1",
          task: "dr",
          state: "awaiting",
          round: 2,
          awaiting: ["alice", "bob"],
          awaiting_tiebreak: false,
          final_value: null,
          provenance: null,
          rounds: [],
        });
      }
      return json([]);
    });
    const controller = new SubmissionController(api, "alice", round1Item);
    controller.form.gradable = true;
    controller.form.severity = "moderate";
    const token = controller.form.requestToken;
    const outcome = await controller.submit();
    expect(outcome.kind).toBe("accepted");
    expect(bodies[0]).toMatchObject({
      grader_id: "alice",
      value: "moderate",
      request_token: token,
      expected_round: 1,
    });
    expect(controller.form.requestToken).not.toBe(token); // fresh for the next one
  });

  it("reloads state and preserves the typed comment on a stale-round conflict", async () => {
    const api = stubClient((url) => {
      if (url.endsWith("/grades")) {
        return json(
          {
            code: "conflict",
            message: "client acted on round 1 but session is in round 2",
            current_state: { state: "awaiting", round: 2, awaiting: ["alice"] },
          },
          409,
        );
      }
      return json([
        {
          ...round1Item,
          round: 2,
          visible_counterpart_grade: "severe",
          visible_comments: [],
        },
      ]);
    });
    const controller = new SubmissionController(api, "alice", round1Item);
    controller.form.gradable = true;
    controller.form.severity = "moderate";
    controller.form.comment = "precious draft";
    const outcome = await controller.submit();
    expect(outcome.kind).toBe("conflict");
    if (outcome.kind === "conflict") {
      expect(outcome.refreshedItem?.round).toBe(2);
      expect(outcome.refreshedItem?.visible_counterpart_grade).toBe("severe");
    }
    expect(controller.form.comment).toBe("precious draft");
    expect(controller.item.round).toBe(2);
  });

  it("renders typed engine errors verbatim", async () => {
    const api = stubClient((url) => {
      if (url.endsWith("/grades")) {
        return json(
          {
            code: "sequencing_error",
            message: "alice is not awaited in round 2 of dr:img1",
            current_state: { state: "awaiting", round: 2, awaiting: ["bob"] },
          },
          409,
        );
      }
      return json([]);
    });
    const controller = new SubmissionController(api, "alice", round1Item);
    controller.form.gradable = true;
    controller.form.severity = "moderate";
    const outcome = await controller.submit();
    expect(outcome).toMatchObject({
      kind: "rejected",
      code: "sequencing_error",
      message: "alice is not awaited in round 2 of dr:img1",
    });
  });

  it("refuses to submit an incomplete form", async () => {
    const api = stubClient(() => json([]));
    const controller = new SubmissionController(api, "alice", round1Item);
    const outcome = await controller.submit();
    expect(outcome.kind).toBe("blocked");
  });
});

describe("SeniorController", () => {
  it("withholds the view from non-senior accounts", async () => {
    const api = stubClient(() =>
      json({ code: "authorization_error", message: "unknown grader", current_state: null }, 403),
    );
    const model = await new SeniorController(api, "specialist").refresh();
    expect(model.withheld).toBe(true);
    expect(model.cards).toHaveLength(0);
  });

  it("builds tie-break cards with chronological history", async () => {
    const api = stubClient((url) => {
      if (url.includes("/work")) {
        return json([
          { ...round1Item, round: 4, session_id: "dr:imgX", image_id: "imgX" },
        ]);
      }
      return json({
        session_id: "dr:imgX",
        image_id: "imgX",
        task: "dr",
        state: "awaiting",
        round: 4,
        awaiting: ["zoe"],
        awaiting_tiebreak: true,
        final_value: null,
        provenance: null,
        rounds: [
          { grader_id: "bob", round: 2, value: "severe", comment: "" },
          { grader_id: "alice", round: 1, value: "moderate", comment: "hm" },
          { grader_id: "alice", round: 2, value: "moderate", comment: "" },
          { grader_id: "bob", round: 1, value: "severe", comment: "" },
          { grader_id: "alice", round: 3, value: "moderate", comment: "" },
          { grader_id: "bob", round: 3, value: "severe", comment: "" },
        ],
      });
    });
    const model = await new SeniorController(api, "zoe").refresh();
    expect(model.cards).toHaveLength(1);
    const card = model.cards[0]!;
    expect(card.history).toHaveLength(6);
    expect(card.history.map((entry) => entry.round)).toEqual([1, 1, 2, 2, 3, 3]);
    expect(card.blind).toBe(false);
  });
});

describe("DashboardController", () => {
  it("formats agreement rates at one decimal", async () => {
    const api = stubClient(() =>
      json({
        sessions: 982,
        states: { consensus: 982 },
        provenance: { agreed_consensus: 982 },
        agreement: {
          dr_gradability: { n: 982, regional: 280 / 982, algorithm: 702 / 982 },
        },
      }),
    );
    const model = await new DashboardController(api).refresh();
    expect(model.agreement).toEqual([
      {
        task: "dr_gradability",
        n: 982,
        regionalPct: "28.5%",
        algorithmPct: "71.5%",
      },
    ]);
  });

  it("keeps a banner on transport failure", async () => {
    const api = stubClient(() => {
      throw new Error("boom");
    });
    const model = await new DashboardController(api).refresh();
    expect(model.banner).toMatch(/unreachable/);
  });

  it("formats missing rates as n/a", () => {
    expect(formatPct(null)).toBe("n/a");
    expect(formatPct(0.285132)).toBe("28.5%");
  });
});
