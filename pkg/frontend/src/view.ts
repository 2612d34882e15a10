/**
 * DOM rendering for the annotation session.  Plot texts go through
 * textContent into <pre> blocks, so nothing is ever truncated, reflowed,
 * or re-ordered; source tags are never part of the task payload.
 */

import type { Session } from "./session.js";
import {
  CHOICE_OPTIONS,
  MIN_EXPLANATION_WORDS,
  type ChoiceValue,
  type TaskQuestion,
} from "./types.js";
import { explanationWords, submittable } from "./state.js";

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

function renderChoiceRow(
  session: Session,
  question: TaskQuestion,
  selected: ChoiceValue | undefined,
  rerender: () => void,
): HTMLElement {
  const row = el("fieldset", "question");
  row.appendChild(el("legend", "question-text", `${question.id}. ${question.text}`));
  for (const [value, label] of CHOICE_OPTIONS) {
    const wrapper = el("label", "choice");
    const input = el("input");
    input.type = "radio";
    input.name = `choice-${question.id}`;
    input.value = value;
    input.checked = selected === value;
    input.addEventListener("change", () => {
      session.choose(question.id, value);
      rerender();
    });
    wrapper.appendChild(input);
    wrapper.appendChild(el("span", undefined, label));
    row.appendChild(wrapper);
  }
  return row;
}

function renderExplanation(
  session: Session,
  question: TaskQuestion,
  rerender: () => void,
): HTMLElement {
  const screen = session.screen;
  if (screen.kind !== "task") throw new Error("explanation rendered off-task");
  const block = el("div", "question explanation");
  block.appendChild(el("p", "question-text", `${question.id}. ${question.text}`));
  const box = el("textarea");
  box.rows = 5;
  box.value = screen.view.explanation;
  box.addEventListener("input", () => {
    session.explain(box.value);
    const counter = block.querySelector(".word-counter");
    if (counter && session.screen.kind === "task") {
      const words = explanationWords(session.screen.view);
      counter.textContent = `${words} / ${MIN_EXPLANATION_WORDS} words`;
      counter.classList.toggle("short", words < MIN_EXPLANATION_WORDS);
    }
    const button = document.querySelector<HTMLButtonElement>("#submit-button");
    if (button) button.disabled = !session.canSubmit();
  });
  block.appendChild(box);
  const words = explanationWords(screen.view);
  const counter = el("p", "word-counter", `${words} / ${MIN_EXPLANATION_WORDS} words`);
  counter.classList.toggle("short", words < MIN_EXPLANATION_WORDS);
  block.appendChild(counter);
  return block;
}

export function render(root: HTMLElement, session: Session): void {
  const rerender = () => render(root, session);
  root.replaceChildren();
  const screen = session.screen;

  if (screen.kind === "loading") {
    root.appendChild(el("p", "status", "Loading the next pair…"));
    return;
  }
  if (screen.kind === "done") {
    root.appendChild(el("h2", undefined, "All done"));
    root.appendChild(el("p", "status", "You have labeled every available pair. Thank you!"));
    return;
  }
  if (screen.kind === "retry") {
    const banner = el("div", "banner error");
    banner.appendChild(el("p", undefined, `Could not reach the server: ${screen.message}`));
    const retry = el("button", undefined, "Retry");
    retry.addEventListener("click", () => {
      void session.loadNext().then(rerender);
    });
    banner.appendChild(retry);
    root.appendChild(banner);
    return;
  }

  const { view, errors, notice } = screen;
  if (notice) root.appendChild(el("div", "banner notice", notice));
  for (const error of errors) {
    root.appendChild(el("div", "banner error", `${error.field}: ${error.message}`));
  }

  root.appendChild(el("h2", undefined, "Premise"));
  root.appendChild(el("p", "premise", view.task.premise));

  const columns = el("div", "plots");
  for (const [label, text] of [
    ["Plot A", view.task.plot_a_text],
    ["Plot B", view.task.plot_b_text],
  ] as const) {
    const column = el("section", "plot-column");
    column.appendChild(el("h3", undefined, label));
    const pre = el("pre", "plot-text");
    pre.textContent = text;
    column.appendChild(pre);
    columns.appendChild(column);
  }
  root.appendChild(columns);

  const form = el("div", "questions");
  for (const question of view.task.questions) {
    if (question.kind === "explanation") {
      form.appendChild(renderExplanation(session, question, rerender));
    } else {
      form.appendChild(renderChoiceRow(session, question, view.choices[question.id], rerender));
    }
  }
  root.appendChild(form);

  const button = el("button", "submit", "Submit");
  button.id = "submit-button";
  button.disabled = !submittable(view);
  button.addEventListener("click", () => {
    void session.submit().then(rerender);
  });
  root.appendChild(button);
}
