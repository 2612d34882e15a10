import { ApiClient } from "./api.js";
import { Session } from "./session.js";
import { render } from "./view.js";

function annotatorId(): string {
  const existing = window.localStorage.getItem("plot-annotation-annotator");
  if (existing) return existing;
  const entered = window.prompt("Enter your annotator id:")?.trim() || `anon-${Date.now()}`;
  window.localStorage.setItem("plot-annotation-annotator", entered);
  return entered;
}

async function start(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const session = new Session(new ApiClient(""), annotatorId(), window.localStorage);
  await session.loadNext();
  render(root, session);
}

void start();
