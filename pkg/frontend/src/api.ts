/** Thin fetch client for the annotation service. */

import { Api, TaskResponse } from "./types.js";

export class HttpApi implements Api {
  constructor(private base: string = "") {}

  async nextTask(annotator: string): Promise<TaskResponse> {
    const response = await fetch(
      `${this.base}/api/task?annotator=${encodeURIComponent(annotator)}`
    );
    if (!response.ok) {
      throw new Error(`task request failed: ${response.status}`);
    }
    return (await response.json()) as TaskResponse;
  }

  async submitRating(annotator: string, imageId: string, score: number): Promise<void> {
    const response = await fetch(`${this.base}/api/rating`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ annotator, image_id: imageId, score }),
    });
    if (!response.ok) {
      throw new Error(`rating request failed: ${response.status}`);
    }
  }
}
