/** DOM wiring: annotator identity from the URL, render loop, input events. */

import { HttpApi } from "./api.js";
import { renderApp } from "./render.js";
import { Session } from "./state.js";

const RETRY_INTERVAL_MS = 4000;

function annotatorFromUrl(): string {
  const url = new URL(window.location.href);
  let annotator = url.searchParams.get("annotator") ?? "";
  if (!annotator) {
    annotator = (window.prompt("Enter your annotator id:") ?? "").trim();
    if (annotator) {
      url.searchParams.set("annotator", annotator);
      window.history.replaceState(null, "", url.toString());
    }
  }
  return annotator;
}

function boot(): void {
  const root = document.getElementById("app");
  if (!root) {
    return;
  }
  const annotator = annotatorFromUrl();
  if (!annotator) {
    root.innerHTML = "<p>An annotator id is required. Reload and enter one.</p>";
    return;
  }

  const session = new Session(new HttpApi(), annotator, () => {
    root.innerHTML = renderApp(session.state);
  });

  document.addEventListener("keydown", (event) => {
    if (event.ctrlKey || event.metaKey || event.altKey) {
      return;
    }
    void session.handleKey(event.key);
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.id === "retry") {
      void session.retry();
      return;
    }
    if (target.id === "reload") {
      window.location.reload();
      return;
    }
    const score = target.closest<HTMLElement>("button.score");
    if (score) {
      void session.rate(Number(score.dataset.index), Number(score.dataset.score));
    }
  });

  window.addEventListener("online", () => void session.retry());
  window.setInterval(() => void session.retry(), RETRY_INTERVAL_MS);

  void session.start();
}

boot();
