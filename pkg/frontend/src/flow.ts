/**
 * Annotation flow state machine, kept DOM-free so it is testable headless:
 * claim a task -> navigate chunks -> highlight a span -> type a question ->
 * submit. Client-side validation mirrors the server rules; a server
 * rejection surfaces inline and preserves the selection.
 */

import { AnnotationClient, ApiFailure } from "./api.js";
import {
  ChunkWindow,
  chunkWindows,
  selectionToContextSpan,
  trimSpan,
  validateSubmission,
} from "./offsets.js";
import type { BatchStatus, TaskView } from "./types.js";

export interface ChunkConfig {
  maxTokens: number;
  stride: number;
}

export interface Selection {
  start: number; // context-global character offsets
  end: number;
}

export class AnnotateFlow {
  tasks: TaskView[] = [];
  progress: BatchStatus = { pending: 0, claimed: 0, submitted: 0, accepted: 0 };
  current: TaskView | null = null;
  windows: ChunkWindow[] = [];
  chunkIndex = 0;
  selection: Selection | null = null;
  question = "";
  error: string | null = null;
  notice: string | null = null;

  constructor(
    private client: AnnotationClient,
    private batchId: string,
    private annotatorId: string,
    private chunks: ChunkConfig = { maxTokens: 512, stride: 128 },
  ) {}

  async refresh(): Promise<void> {
    const [queries, status] = await Promise.all([
      this.client.batchQueries(this.batchId),
      this.client.batchStatus(this.batchId),
    ]);
    this.tasks = queries.tasks;
    this.progress = status;
    if (this.current) {
      const mine = this.tasks.find((t) => t.task_id === this.current!.task_id);
      if (!mine || mine.claimant !== this.annotatorId || mine.status !== "claimed") {
        this.notice = "lease expired: the task returned to the queue";
        this.current = null;
        this.selection = null;
      }
    }
  }

  get complete(): boolean {
    const total =
      this.progress.pending + this.progress.claimed +
      this.progress.submitted + this.progress.accepted;
    return total > 0 && this.progress.accepted === total;
  }

  pendingTasks(): TaskView[] {
    return this.tasks.filter((t) => t.status === "pending");
  }

  /** Optimistic claim: walk the pending list until one claim wins. */
  async claimNext(): Promise<TaskView | null> {
    for (const task of this.pendingTasks()) {
      try {
        this.current = await this.client.claim(task.task_id, this.annotatorId);
        this.windows = chunkWindows(
          this.current.context, this.chunks.maxTokens, this.chunks.stride);
        this.chunkIndex = 0;
        this.selection = null;
        this.question = this.current.seed_question ?? "";
        this.error = null;
        return this.current;
      } catch (err) {
        if (err instanceof ApiFailure && err.status === 409) {
          continue; // someone else got it; reconcile with the next one
        }
        throw err;
      }
    }
    await this.refresh();
    return null;
  }

  get window(): ChunkWindow | null {
    return this.windows[this.chunkIndex] ?? null;
  }

  gotoChunk(index: number): void {
    if (index < 0 || index >= this.windows.length) return;
    this.chunkIndex = index;
  }

  /** Chunk text currently on screen. */
  chunkText(): string {
    if (!this.current || !this.window) return "";
    return this.current.context.slice(this.window.charStart, this.window.charEnd);
  }

  /** Record a highlight made inside the visible chunk (local offsets). */
  selectLocal(localStart: number, localEnd: number): Selection | null {
    if (!this.current || !this.window) return null;
    const [gs, ge] = selectionToContextSpan(this.window, localStart, localEnd);
    const [start, end] = trimSpan(this.current.context, gs, ge);
    if (start >= end) {
      this.selection = null;
      return null;
    }
    this.selection = { start, end };
    return this.selection;
  }

  selectedText(): string {
    if (!this.current || !this.selection) return "";
    return this.current.context.slice(this.selection.start, this.selection.end);
  }

  canSubmit(): boolean {
    if (!this.current || !this.selection) return false;
    return (
      validateSubmission(
        this.current.context, this.question,
        this.selection.start, this.selection.end).length === 0
    );
  }

  async submit(): Promise<boolean> {
    if (!this.current || !this.selection) {
      this.error = "highlight an answer span first";
      return false;
    }
    const problems = validateSubmission(
      this.current.context, this.question,
      this.selection.start, this.selection.end);
    if (problems.length > 0) {
      this.error = problems[0].message;
      return false;
    }
    try {
      await this.client.label(this.current.task_id, this.annotatorId, {
        question: this.question,
        answer_start: this.selection.start,
        answer_end: this.selection.end,
      });
    } catch (err) {
      if (err instanceof ApiFailure) {
        // validation error: keep the selection so the annotator can adjust
        this.error = err.detail.message;
        if (err.status === 409 || err.status === 403) {
          this.notice = "lease expired: the task returned to the queue";
          this.current = null;
          this.selection = null;
        }
        await this.refresh();
        return false;
      }
      throw err;
    }
    this.error = null;
    this.current = null;
    this.selection = null;
    this.question = "";
    await this.refresh();
    return true;
  }
}
