/** Wire types mirroring the annotation-service JSON payloads. */

export type TaskStatus = "pending" | "claimed" | "submitted" | "accepted";

export interface TaskView {
  task_id: string;
  batch_id: string;
  context: string;
  seed_question: string | null;
  document_id: string | null;
  domain: string;
  status: TaskStatus;
  claimant: string | null;
  created_at: number;
  updated_at: number;
}

export interface BatchStatus {
  pending: number;
  claimed: number;
  submitted: number;
  accepted: number;
}

export interface LabeledSample {
  id: string;
  document_id: string;
  question: string;
  answer_text: string;
  answer_start: number;
  answer_end: number;
  provenance: string;
  domain: string;
}

export interface ApiError {
  code: string;
  message: string;
  field: string | null;
}

export interface Submission {
  question: string;
  answer_start: number;
  answer_end: number;
  note?: string;
}
