/**
 * Annotation session flow, independent of the DOM: load the next pair,
 * collect answers (persisting the draft), submit, advance.  The view layer
 * renders whatever screen this machine is on.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  clearDraft,
  restoreDraft,
  saveDraft,
  setChoice,
  setExplanation,
  submittable,
  submissionBody,
  type DraftStore,
  type TaskView,
} from "./state.js";
import type { ChoiceValue, FieldError } from "./types.js";

export type Screen =
  | { kind: "loading" }
  | { kind: "task"; view: TaskView; errors: FieldError[]; notice: string | null }
  | { kind: "done" }
  | { kind: "retry"; message: string };

export class Session {
  screen: Screen = { kind: "loading" };

  constructor(
    private readonly api: ApiClient,
    readonly annotatorId: string,
    private readonly drafts: DraftStore,
  ) {}

  /** Fetch the next task; a network failure becomes a retry banner and the
   * current draft stays in storage untouched. */
  async loadNext(notice: string | null = null): Promise<Screen> {
    this.screen = { kind: "loading" };
    let task;
    try {
      task = await this.api.nextTask(this.annotatorId);
    } catch (err) {
      this.screen = { kind: "retry", message: err instanceof ApiError ? err.message : String(err) };
      return this.screen;
    }
    if (task === null) {
      this.screen = { kind: "done" };
      return this.screen;
    }
    const view = restoreDraft(this.drafts, this.annotatorId, task);
    this.screen = { kind: "task", view, errors: [], notice };
    return this.screen;
  }

  private updateView(view: TaskView): void {
    if (this.screen.kind !== "task") return;
    saveDraft(this.drafts, this.annotatorId, view);
    this.screen = { ...this.screen, view };
  }

  choose(questionId: string, value: ChoiceValue): void {
    if (this.screen.kind !== "task") return;
    this.updateView(setChoice(this.screen.view, questionId, value));
  }

  explain(text: string): void {
    if (this.screen.kind !== "task") return;
    this.updateView(setExplanation(this.screen.view, text));
  }

  canSubmit(): boolean {
    return this.screen.kind === "task" && submittable(this.screen.view);
  }

  /** Submit the current view: 201 advances, 422 maps inline errors, 409
   * informs and advances.  A non-submittable view never reaches the wire. */
  async submit(): Promise<Screen> {
    if (this.screen.kind !== "task") return this.screen;
    const { view } = this.screen;
    if (!submittable(view)) {
      return this.screen;
    }
    let result;
    try {
      result = await this.api.submit(submissionBody(view, this.annotatorId));
    } catch (err) {
      this.screen = {
        kind: "task",
        view,
        errors: [],
        notice: err instanceof ApiError ? err.message : String(err),
      };
      return this.screen;
    }
    if (result.kind === "created") {
      clearDraft(this.drafts, this.annotatorId, view.task.pair_id);
      return this.loadNext("Saved. Here is your next pair.");
    }
    if (result.kind === "duplicate") {
      clearDraft(this.drafts, this.annotatorId, view.task.pair_id);
      return this.loadNext(`Already recorded (${result.message}); moving on.`);
    }
    this.screen = { kind: "task", view, errors: result.errors, notice: null };
    return this.screen;
  }
}
