/**
 * Task view state: the fetched task plus the annotator's in-progress
 * answers, with the submittability rule and local draft persistence.
 *
 * Submittable exactly when all five choice questions are answered and the
 * explanation reaches the word minimum; drafts are keyed per (annotator,
 * pair) so a reload never loses a long explanation.
 */

import {
  CHOICE_QUESTION_IDS,
  MIN_EXPLANATION_WORDS,
  type ChoiceValue,
  type Task,
} from "./types.js";
import { wordCount } from "./wordcount.js";

export interface TaskView {
  task: Task;
  choices: Partial<Record<string, ChoiceValue>>;
  explanation: string;
}

/** Minimal slice of the Storage interface, so tests can use a Map. */
export interface DraftStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export function draftKey(annotatorId: string, pairId: string): string {
  return `plot-annotation-draft:${annotatorId}:${pairId}`;
}

export function createView(task: Task): TaskView {
  return { task, choices: {}, explanation: "" };
}

export function setChoice(view: TaskView, questionId: string, value: ChoiceValue): TaskView {
  return { ...view, choices: { ...view.choices, [questionId]: value } };
}

export function setExplanation(view: TaskView, text: string): TaskView {
  return { ...view, explanation: text };
}

export function explanationWords(view: TaskView): number {
  return wordCount(view.explanation);
}

export function missingChoices(view: TaskView): string[] {
  return CHOICE_QUESTION_IDS.filter((q) => view.choices[q] === undefined);
}

export function submittable(view: TaskView): boolean {
  return missingChoices(view).length === 0 && explanationWords(view) >= MIN_EXPLANATION_WORDS;
}

export function saveDraft(store: DraftStore, annotatorId: string, view: TaskView): void {
  store.setItem(
    draftKey(annotatorId, view.task.pair_id),
    JSON.stringify({ choices: view.choices, explanation: view.explanation }),
  );
}

export function restoreDraft(store: DraftStore, annotatorId: string, task: Task): TaskView {
  const raw = store.getItem(draftKey(annotatorId, task.pair_id));
  if (raw === null) return createView(task);
  try {
    const draft = JSON.parse(raw) as { choices?: Record<string, ChoiceValue>; explanation?: string };
    return { task, choices: draft.choices ?? {}, explanation: draft.explanation ?? "" };
  } catch {
    return createView(task);
  }
}

export function clearDraft(store: DraftStore, annotatorId: string, pairId: string): void {
  store.removeItem(draftKey(annotatorId, pairId));
}

export function submissionBody(view: TaskView, annotatorId: string): {
  pair_id: string;
  annotator_id: string;
  choices: Record<string, ChoiceValue>;
  q2_explanation: string;
} {
  const choices: Record<string, ChoiceValue> = {};
  for (const q of CHOICE_QUESTION_IDS) {
    const value = view.choices[q];
    if (value !== undefined) choices[q] = value;
  }
  return {
    pair_id: view.task.pair_id,
    annotator_id: annotatorId,
    choices,
    q2_explanation: view.explanation,
  };
}
