/** Session state machine.
 *
 * All state of record lives server-side; this class only tracks the current
 * task, keyboard focus, and an outbox of unacknowledged ratings. Ratings are
 * sent one at a time (no double-submit), survive network failures in the
 * queue, and at most one entry per image ever waits, so the server sees
 * exactly one effective rating per keystroke.
 */

import { Api, TaskView, isDone } from "./types.js";

export type Phase = "loading" | "rating" | "done" | "error";

export type PendingRating = { imageId: string; score: number };

export interface SessionState {
  phase: Phase;
  task: TaskView | null;
  focus: number;
  selections: Record<string, number>;
  queued: number;
  banner: string | null;
  completed: { rated: number; total: number } | null;
  error: string | null;
}

const RETRY_BANNER = "Connection lost — rating queued, retrying…";

export class Session {
  private task: TaskView | null = null;
  private phase: Phase = "loading";
  private focus = 0;
  private selections: Record<string, number> = {};
  private queue: PendingRating[] = [];
  private inFlight: PendingRating | null = null;
  private banner: string | null = null;
  private completed: { rated: number; total: number } | null = null;
  private error: string | null = null;

  constructor(
    private api: Api,
    readonly annotator: string,
    private onChange: () => void = () => {}
  ) {}

  get state(): SessionState {
    return {
      phase: this.phase,
      task: this.task,
      focus: this.focus,
      selections: { ...this.selections },
      queued: this.queue.length + (this.inFlight ? 1 : 0),
      banner: this.banner,
      completed: this.completed,
      error: this.error,
    };
  }

  async start(): Promise<void> {
    await this.loadNext();
  }

  /** Keys 1-5 rate the focused image and move focus on; arrows move focus. */
  async handleKey(key: string): Promise<void> {
    if (this.phase !== "rating" || !this.task) {
      return;
    }
    if (key >= "1" && key <= "5") {
      await this.rate(this.focus, Number(key));
      return;
    }
    if (key === "ArrowRight") {
      this.focus = Math.min(this.focus + 1, this.task.images.length - 1);
      this.onChange();
    } else if (key === "ArrowLeft") {
      this.focus = Math.max(this.focus - 1, 0);
      this.onChange();
    }
    // anything else is ignored
  }

  async rate(index: number, score: number): Promise<void> {
    if (!this.task || index < 0 || index >= this.task.images.length) {
      return;
    }
    if (!Number.isInteger(score) || score < 1 || score > 5) {
      return;
    }
    const imageId = this.task.images[index].image_id;
    this.focus = Math.min(index + 1, this.task.images.length - 1);

    const samePending = (entry: PendingRating | null) =>
      entry !== null && entry.imageId === imageId && entry.score === score;
    const pendingForImage =
      samePending(this.inFlight) || this.queue.some((entry) => samePending(entry));
    if (pendingForImage) {
      this.onChange(); // double-submit guard: identical rating already on its way
      return;
    }
    const alreadyAcked =
      this.selections[imageId] === score &&
      this.inFlight?.imageId !== imageId &&
      !this.queue.some((entry) => entry.imageId === imageId);
    if (alreadyAcked) {
      this.onChange();
      return;
    }

    this.selections[imageId] = score;
    // a newer score for the same image supersedes its queued predecessor
    this.queue = this.queue.filter((entry) => entry.imageId !== imageId);
    this.queue.push({ imageId, score });
    this.onChange();
    await this.flush();
  }

  /** Re-attempt delivery of queued ratings (reconnect / timer hook). */
  async retry(): Promise<void> {
    if (!this.inFlight && this.queue.length > 0) {
      await this.flush();
    }
  }

  private async flush(): Promise<void> {
    if (this.inFlight || this.queue.length === 0) {
      return;
    }
    const entry = this.queue.shift()!;
    this.inFlight = entry;
    this.onChange();
    try {
      await this.api.submitRating(this.annotator, entry.imageId, entry.score);
      this.inFlight = null;
      this.banner = null;
      this.onChange();
      if (this.queue.length > 0) {
        await this.flush();
      } else {
        await this.maybeAdvance();
      }
    } catch {
      this.queue.unshift(entry);
      this.inFlight = null;
      this.banner = RETRY_BANNER;
      this.onChange();
    }
  }

  private allRated(): boolean {
    if (!this.task) {
      return false;
    }
    return this.task.images.every((image) => this.selections[image.image_id] !== undefined);
  }

  private async maybeAdvance(): Promise<void> {
    if (this.phase === "rating" && this.allRated() && !this.inFlight && this.queue.length === 0) {
      await this.loadNext();
    }
  }

  private async loadNext(): Promise<void> {
    this.phase = "loading";
    this.onChange();
    try {
      const response = await this.api.nextTask(this.annotator);
      if (isDone(response)) {
        this.phase = "done";
        this.task = null;
        this.completed = { rated: response.rated, total: response.total };
      } else {
        this.task = response;
        this.selections = { ...response.ratings };
        const firstUnrated = response.images.findIndex(
          (image) => this.selections[image.image_id] === undefined
        );
        this.focus = firstUnrated >= 0 ? firstUnrated : 0;
        this.phase = "rating";
      }
    } catch (err) {
      this.phase = "error";
      this.error = err instanceof Error ? err.message : String(err);
    }
    this.onChange();
  }
}
