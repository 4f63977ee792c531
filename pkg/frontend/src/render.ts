/** Pure HTML builders. The server controls image order; nothing here sorts,
 * shuffles, or knows which method produced an image. */

import { SessionState } from "./state.js";
import { TaskView } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function renderRubric(guidelines: string): string {
  const lines = guidelines
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => `<li>${escapeHtml(line)}</li>`)
    .join("");
  return `<aside class="rubric"><h2>Score guide</h2><ul>${lines}</ul>
  <p class="hint">Keys 1–5 rate the highlighted image; arrows move the highlight.</p></aside>`;
}

function renderProgress(task: TaskView): string {
  const percent = task.total > 0 ? Math.round((task.position / task.total) * 100) : 0;
  return `<div class="progress" role="progressbar" aria-valuenow="${task.position}" aria-valuemax="${task.total}">
    <div class="progress-fill" style="width: ${percent}%"></div>
    <span class="progress-text">prompt ${task.position + 1} of ${task.total}</span>
  </div>`;
}

function renderCard(
  task: TaskView,
  index: number,
  focused: boolean,
  selection: number | undefined
): string {
  const image = task.images[index];
  const buttons = [1, 2, 3, 4, 5]
    .map(
      (score) =>
        `<button class="score${selection === score ? " chosen" : ""}"
           data-index="${index}" data-score="${score}">${score}</button>`
    )
    .join("");
  const badge = selection !== undefined ? `<span class="badge">rated ${selection}</span>` : "";
  return `<figure class="card${focused ? " focused" : ""}" data-index="${index}">
    <img src="${escapeHtml(image.url)}" alt="Image ${escapeHtml(image.label)}" />
    <figcaption>Image ${escapeHtml(image.label)} ${badge}</figcaption>
    <div class="scores">${buttons}</div>
  </figure>`;
}

export function renderApp(state: SessionState): string {
  if (state.phase === "loading") {
    return `<main class="screen"><p>Loading…</p></main>`;
  }
  if (state.phase === "error") {
    return `<main class="screen"><p class="error">Something went wrong: ${escapeHtml(
      state.error ?? "unknown error"
    )}</p><button id="reload">Reload</button></main>`;
  }
  if (state.phase === "done") {
    const completed = state.completed;
    return `<main class="screen done">
      <h1>All done — thank you!</h1>
      <p>You rated ${completed?.rated ?? 0} images across ${completed?.total ?? 0} prompts.</p>
    </main>`;
  }
  const task = state.task!;
  const banner = state.banner
    ? `<div class="banner" role="alert">${escapeHtml(state.banner)}
       <button id="retry">Retry now</button></div>`
    : "";
  const cards = task.images
    .map((image, index) =>
      renderCard(task, index, index === state.focus, state.selections[image.image_id])
    )
    .join("");
  return `${banner}
  <main class="task">
    ${renderProgress(task)}
    <h1 class="prompt">${escapeHtml(task.prompt)}</h1>
    <div class="layout">
      ${renderRubric(task.guidelines)}
      <section class="grid">${cards}</section>
    </div>
  </main>`;
}
