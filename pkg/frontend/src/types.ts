/** Wire types mirroring the annotation service API. */

export type TaskImage = {
  image_id: string;
  label: string;
  url: string;
};

/** One prompt's rating task; images arrive pre-shuffled by the server. */
export type TaskView = {
  task_id: string;
  prompt: string;
  guidelines: string;
  images: TaskImage[];
  ratings: Record<string, number>;
  position: number;
  total: number;
};

export type DoneView = {
  done: true;
  rated: number;
  total: number;
};

export type TaskResponse = TaskView | DoneView;

export function isDone(response: TaskResponse): response is DoneView {
  return (response as DoneView).done === true;
}

export interface Api {
  nextTask(annotator: string): Promise<TaskResponse>;
  submitRating(annotator: string, imageId: string, score: number): Promise<void>;
}
