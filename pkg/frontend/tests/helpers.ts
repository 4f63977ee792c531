import { Api, TaskResponse, TaskView } from "../src/types.js";

export function makeTask(overrides: Partial<TaskView> = {}): TaskView {
  const images = ["img-a1b2", "img-c3d4", "img-e5f6"].map((id, i) => ({
    image_id: id,
    label: "ABC"[i],
    url: `/api/image/${id}`,
  }));
  return {
    task_id: "task-0000",
    prompt: "A cat sails across the sea in a large seashell, holding a mast.",
    guidelines: [
      "1: The image is completely irrelevant to the prompt.",
      "2: The image contains some relevant objects, but they exhibit severe issues (e.g., distortion or missing parts).",
      "3: The image includes most relevant objects, but some elements implied by the prompt are missing (e.g., missing critical tools or patterns to complete the interaction).",
      "4: The image captures most relevant objects and infers additional ones successfully, but there are minor issues with object relationships (e.g. improvement to appearance of tools, subpart, or limbs needed.)",
      "5: The image accurately and naturally reflects the prompt description.",
    ].join("\n"),
    images,
    ratings: {},
    position: 0,
    total: 2,
    ...overrides,
  };
}

export type Deferred<T> = {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (reason?: unknown) => void;
};

export function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (reason?: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

/** In-memory stand-in for the annotation service, with failure injection. */
export class FakeApi implements Api {
  responses: TaskResponse[];
  log: { imageId: string; score: number }[] = [];
  submitCalls = 0;
  taskCalls = 0;
  failNextSubmits = 0;
  manual: Deferred<void>[] = [];
  useManual = false;

  constructor(responses: TaskResponse[]) {
    this.responses = [...responses];
  }

  async nextTask(): Promise<TaskResponse> {
    this.taskCalls += 1;
    if (this.responses.length > 1) {
      return this.responses.shift()!;
    }
    return this.responses[0];
  }

  async submitRating(_annotator: string, imageId: string, score: number): Promise<void> {
    this.submitCalls += 1;
    if (this.useManual) {
      const gate = deferred<void>();
      this.manual.push(gate);
      await gate.promise;
    }
    if (this.failNextSubmits > 0) {
      this.failNextSubmits -= 1;
      throw new Error("simulated network failure");
    }
    this.log.push({ imageId, score });
  }

  /** Latest-wins view, mirroring the server's effective-rating rule. */
  effective(): Map<string, number> {
    const latest = new Map<string, number>();
    for (const entry of this.log) {
      latest.set(entry.imageId, entry.score);
    }
    return latest;
  }
}
