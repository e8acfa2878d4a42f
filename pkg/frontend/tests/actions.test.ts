/**
 * Legality rules: no illegal kind/action combination is offered or
 * submittable, locally or over the wire.
 */

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api";
import { isLegal, isSubmittable, legalActions, LEGAL_ACTIONS } from "../src/actions";
import { renderItemDetail } from "../src/render";
import { QueueController } from "../src/state";
import type { DecisionAction, ItemDetail, ReviewKind } from "../src/types";
import { startFixtureServer, makeItem, type FixtureServer } from "./fixture_server";

const ALL_ACTIONS: DecisionAction[] = ["approve", "reject", "annotate", "add", "delete", "keep"];
const ALL_KINDS: ReviewKind[] = ["segmentation", "pair", "triplet", "refinement"];

describe("legality table", () => {
  it("refinement answers add/delete/keep and nothing else", () => {
    expect([...legalActions("refinement")]).toEqual(["add", "delete", "keep"]);
    expect(isLegal("refinement", "approve")).toBe(false);
  });

  it("validation kinds answer approve/reject/annotate and nothing else", () => {
    for (const kind of ["segmentation", "pair", "triplet"] as ReviewKind[]) {
      expect([...legalActions(kind)]).toEqual(["approve", "reject", "annotate"]);
      expect(isLegal(kind, "keep")).toBe(false);
    }
  });

  it("decided items are never submittable, whatever the action", () => {
    for (const kind of ALL_KINDS) {
      const decided = makeItem({ id: "x", kind, state: "approved" });
      for (const action of ALL_ACTIONS) {
        expect(isSubmittable(decided, action)).toBe(false);
      }
    }
  });
});

describe("rendered action buttons", () => {
  function detailFor(kind: ReviewKind, state: ItemDetail["state"] = "pending"): ItemDetail {
    return {
      ...makeItem({ id: "d1", kind, state }),
      context: {
        abstract: "a",
        segments: null,
        hierarchy_fragment: [],
        legal_actions: [...LEGAL_ACTIONS[kind]],
      },
    };
  }

  it("only legal actions are ever rendered as buttons", () => {
    for (const kind of ALL_KINDS) {
      const html = renderItemDetail(detailFor(kind), false);
      for (const action of ALL_ACTIONS) {
        const present = html.includes(`data-action="${action}"`);
        expect(present).toBe(isLegal(kind, action));
      }
    }
  });

  it("decided items render no action buttons at all", () => {
    const html = renderItemDetail(detailFor("pair", "approved"), false);
    expect(html).not.toContain("data-action=");
    expect(html).toContain("decided: approved");
  });

  it("in-flight items render disabled buttons", () => {
    const html = renderItemDetail(detailFor("refinement"), true);
    expect(html).toContain("disabled");
  });

  it("highlights the candidate concept inside its segment excerpt", () => {
    const detail = detailFor("pair");
    detail.payload = {
      pair: ["Physics", "Neutrino oscillation"],
      segment_origin: "research_methods",
      segment_excerpt: "We study neutrino oscillation with <new> detectors.",
    };
    const html = renderItemDetail(detail, false);
    expect(html).toContain("<mark>neutrino oscillation</mark>");
    expect(html).toContain('data-origin="research_methods"');
    expect(html).not.toContain("<new>"); // payload text stays escaped
  });
});

describe("wire-level protection", () => {
  let server: FixtureServer;
  let controller: QueueController;

  beforeEach(async () => {
    server = await startFixtureServer([
      makeItem({ id: "p1", kind: "pair" }),
      makeItem({ id: "r1", kind: "refinement" }),
    ]);
    controller = new QueueController(new ReviewApi(server.url));
    await controller.refresh();
  });

  afterEach(async () => {
    await server.close();
  });

  it("illegal combinations are rejected locally and never reach the server", async () => {
    for (const [id, action] of [
      ["p1", "keep"],
      ["p1", "add"],
      ["r1", "approve"],
      ["r1", "reject"],
    ] as [string, DecisionAction][]) {
      const outcome = await controller.submitDecision(id, action);
      expect(outcome.status).toBe("error");
    }
    expect(server.journal).toHaveLength(0);
    expect(controller.items).toHaveLength(2); // nothing optimistically removed
  });

  it("every legal combination round-trips with a 200", async () => {
    expect((await controller.submitDecision("p1", "annotate")).status).toBe("applied");
    expect((await controller.submitDecision("r1", "delete")).status).toBe("applied");
    expect(server.journal.map((e) => e.action)).toEqual(["annotate", "delete"]);
  });
});
