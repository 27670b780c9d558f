/** Typed client for the annotation-service HTTP API. */

import type {
  ApiError,
  BatchStatus,
  LabeledSample,
  Submission,
  TaskView,
} from "./types.js";

export class ApiFailure extends Error {
  status: number;
  detail: ApiError;

  constructor(status: number, detail: ApiError) {
    super(`${detail.code}: ${detail.message}`);
    this.status = status;
    this.detail = detail;
  }
}

async function parseError(resp: Response): Promise<ApiFailure> {
  let detail: ApiError;
  try {
    detail = (await resp.json()) as ApiError;
  } catch {
    detail = { code: "http_error", message: resp.statusText, field: null };
  }
  return new ApiFailure(resp.status, detail);
}

export class AnnotationClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.get("/api/health");
  }

  publishBatch(
    batchId: string | null,
    tasks: Array<Record<string, unknown>>,
  ): Promise<{ batch_id: string }> {
    return this.post("/api/batches", { batch_id: batchId, tasks });
  }

  batchQueries(batchId: string): Promise<{ tasks: TaskView[] }> {
    return this.get(`/api/batches/${batchId}/queries`);
  }

  batchStatus(batchId: string): Promise<BatchStatus> {
    return this.get(`/api/batches/${batchId}/status`);
  }

  batchLabels(batchId: string): Promise<{ samples: LabeledSample[] }> {
    return this.get(`/api/batches/${batchId}/labels`);
  }

  claim(taskId: string, annotatorId: string): Promise<TaskView> {
    return this.post(`/api/tasks/${taskId}/claim`, { annotator_id: annotatorId });
  }

  release(taskId: string, annotatorId: string): Promise<TaskView> {
    return this.post(`/api/tasks/${taskId}/release`, { annotator_id: annotatorId });
  }

  label(
    taskId: string,
    annotatorId: string,
    submission: Submission,
  ): Promise<LabeledSample> {
    return this.post(`/api/tasks/${taskId}/label`, {
      annotator_id: annotatorId,
      ...submission,
    });
  }
}
