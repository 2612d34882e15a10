export interface TaskQuestion {
  id: string;
  text: string;
  kind: "choice" | "explanation";
}

export interface Task {
  pair_id: string;
  premise: string;
  plot_a_text: string;
  plot_b_text: string;
  questions: TaskQuestion[];
}

export type ChoiceValue = "PLOT_A" | "PLOT_B" | "BOTH" | "NEITHER";

export const CHOICE_QUESTION_IDS = ["Q1", "Q3", "Q4", "Q5", "Q6"] as const;

/** Exact labels shown to annotators, in display order. */
export const CHOICE_OPTIONS: ReadonlyArray<readonly [ChoiceValue, string]> = [
  ["PLOT_A", "Plot A"],
  ["PLOT_B", "Plot B"],
  ["BOTH", "Both"],
  ["NEITHER", "Neither"],
];

export const MIN_EXPLANATION_WORDS = 25;

export interface FieldError {
  field: string;
  code: string;
  message: string;
}

export type SubmitResult =
  | { kind: "created" }
  | { kind: "invalid"; errors: FieldError[] }
  | { kind: "duplicate"; message: string };
