import { describe, expect, it } from "vitest";

import { GradingFormState } from "../src/form.js";
import { freshToken } from "../src/tokens.js";

describe("GradingFormState", () => {
  it("blocks submission until gradability is set", () => {
    const form = new GradingFormState("dr");
    expect(form.canSubmit()).toBe(false);
    expect(form.blockedReason()).toMatch(/gradable/);
    form.severity = "moderate";
    expect(form.canSubmit()).toBe(false);
    form.gradable = true;
    expect(form.canSubmit()).toBe(true);
    expect(form.valueForSubmission()).toBe("moderate");
  });

  it("requires a severity choice once gradable on the DR task", () => {
    const form = new GradingFormState("dr");
    form.gradable = true;
    expect(form.canSubmit()).toBe(false);
    expect(form.blockedReason()).toMatch(/severity/);
  });

  it("requires a DME choice on the DME task", () => {
    const form = new GradingFormState("dme");
    form.gradable = true;
    expect(form.canSubmit()).toBe(false);
    form.dme = "referable";
    expect(form.valueForSubmission()).toBe("referable");
  });

  it("blocks severity submission for an ungradable image", () => {
    const form = new GradingFormState("dr");
    form.gradable = false;
    form.severity = "severe";
    expect(form.canSubmit()).toBe(false);
    expect(form.blockedReason()).toMatch(/adjudicated separately/);
  });

  it("submits the gradability toggle itself on gradability tasks", () => {
    const form = new GradingFormState("dr_gradability");
    form.gradable = false;
    expect(form.canSubmit()).toBe(true);
    expect(form.valueForSubmission()).toBe(false);
  });

  it("throws when reading a value off an incomplete form", () => {
    const form = new GradingFormState("dr");
    expect(() => form.valueForSubmission()).toThrow(/not submittable/);
  });

  it("mints a fresh token per logical submission and preserves comments", () => {
    const form = new GradingFormState("dr");
    const first = form.requestToken;
    form.comment = "typed notes";
    form.advance();
    expect(form.requestToken).not.toBe(first);
    expect(form.comment).toBe("typed notes");
    expect(form.severity).toBeNull();
  });
});

describe("freshToken", () => {
  it("never repeats across many draws", () => {
    const seen = new Set<string>();
    for (let i = 0; i < 5000; i++) {
      const token = freshToken();
      expect(seen.has(token)).toBe(false);
      seen.add(token);
    }
  });
});
