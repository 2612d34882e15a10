import { describe, expect, it } from "vitest";

import {
  createView,
  explanationWords,
  missingChoices,
  restoreDraft,
  saveDraft,
  setChoice,
  setExplanation,
  submissionBody,
  submittable,
  type DraftStore,
} from "../src/state.js";
import { CHOICE_OPTIONS, type Task } from "../src/types.js";

const TASK: Task = {
  pair_id: "pair-001",
  premise: "A premise about an uncharted door.",
  plot_a_text: "Settings: Version A of the tale.",
  plot_b_text: "Settings: Version B of the tale.",
  questions: [
    { id: "Q1", text: "Which story plot is more interesting to you overall?", kind: "choice" },
    { id: "Q2", text: "Please explain your answer to Q1.", kind: "explanation" },
    { id: "Q3", text: "Book or movie?", kind: "choice" },
    { id: "Q4", text: "Suspense?", kind: "choice" },
    { id: "Q5", text: "Identify with?", kind: "choice" },
    { id: "Q6", text: "Better ending?", kind: "choice" },
  ],
};

function words(n: number): string {
  return Array.from({ length: n }, (_, i) => `w${i}`).join(" ");
}

function answeredView(explanationLength: number) {
  let view = createView(TASK);
  for (const q of ["Q1", "Q3", "Q4", "Q5", "Q6"]) {
    view = setChoice(view, q, "PLOT_A");
  }
  return setExplanation(view, words(explanationLength));
}

class MemoryStore implements DraftStore {
  private data = new Map<string, string>();
  getItem(key: string) { return this.data.get(key) ?? null; }
  setItem(key: string, value: string) { this.data.set(key, value); }
  removeItem(key: string) { this.data.delete(key); }
}

describe("submittable", () => {
  it("requires all five choices and 25 words", () => {
    expect(submittable(answeredView(25))).toBe(true);
  });

  it("is false at 24 words", () => {
    const view = answeredView(24);
    expect(explanationWords(view)).toBe(24);
    expect(submittable(view)).toBe(false);
  });

  it("is false with a missing choice even at 40 words", () => {
    let view = createView(TASK);
    for (const q of ["Q1", "Q3", "Q4", "Q5"]) view = setChoice(view, q, "BOTH");
    view = setExplanation(view, words(40));
    expect(missingChoices(view)).toEqual(["Q6"]);
    expect(submittable(view)).toBe(false);
  });
});

describe("draft persistence", () => {
  it("round-trips a mid-task draft, as after a reload", () => {
    const store = new MemoryStore();
    let view = answeredView(30);
    view = setChoice(view, "Q4", "NEITHER");
    saveDraft(store, "ann-1", view);

    const restored = restoreDraft(store, "ann-1", TASK);
    expect(restored.choices).toEqual(view.choices);
    expect(restored.explanation).toBe(view.explanation);
    expect(submittable(restored)).toBe(true);
  });

  it("is scoped per annotator and pair", () => {
    const store = new MemoryStore();
    saveDraft(store, "ann-1", setExplanation(createView(TASK), "draft text"));
    const other = restoreDraft(store, "ann-2", TASK);
    expect(other.explanation).toBe("");
  });

  it("falls back to a fresh view on corrupt drafts", () => {
    const store = new MemoryStore();
    store.setItem("plot-annotation-draft:ann-1:pair-001", "{not json");
    const view = restoreDraft(store, "ann-1", TASK);
    expect(view.explanation).toBe("");
    expect(view.choices).toEqual({});
  });
});

describe("presentation constants", () => {
  it("offers exactly the four labels in order", () => {
    expect(CHOICE_OPTIONS.map(([, label]) => label)).toEqual([
      "Plot A",
      "Plot B",
      "Both",
      "Neither",
    ]);
  });
});

describe("submissionBody", () => {
  it("carries the answers verbatim", () => {
    const body = submissionBody(answeredView(26), "ann-9");
    expect(body.pair_id).toBe("pair-001");
    expect(body.annotator_id).toBe("ann-9");
    expect(Object.keys(body.choices).sort()).toEqual(["Q1", "Q3", "Q4", "Q5", "Q6"]);
    expect(body.q2_explanation.split(" ")).toHaveLength(26);
  });
});
