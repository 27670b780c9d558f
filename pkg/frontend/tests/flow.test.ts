import { describe, expect, it } from "vitest";

import { AnnotationClient, ApiFailure } from "../src/api.js";
import { AnnotateFlow } from "../src/flow.js";
import type { BatchStatus, TaskView } from "../src/types.js";

const CONTEXT = "the code for alpha is red . the code for bravo is blue .";

function makeTask(id: string, status: TaskView["status"] = "pending",
                  claimant: string | null = null): TaskView {
  return {
    task_id: id, batch_id: "b1", context: CONTEXT, seed_question: null,
    document_id: `doc-${id}`, domain: "toy", status, claimant,
    created_at: 0, updated_at: 0,
  };
}

/** In-memory stand-in for the HTTP client, scriptable per test. */
class FakeClient extends AnnotationClient {
  tasks = new Map<string, TaskView>();
  labels: Array<Record<string, unknown>> = [];
  failNextLabelWith: ApiFailure | null = null;

  constructor(tasks: TaskView[]) {
    super("");
    for (const t of tasks) this.tasks.set(t.task_id, t);
  }

  private statusCounts(): BatchStatus {
    const counts: BatchStatus = { pending: 0, claimed: 0, submitted: 0, accepted: 0 };
    for (const t of this.tasks.values()) counts[t.status] += 1;
    return counts;
  }

  override async batchQueries(_: string) {
    // deep copies: the real client parses fresh JSON off the wire
    return { tasks: [...this.tasks.values()].map((t) => ({ ...t })) };
  }

  override async batchStatus(_: string) {
    return this.statusCounts();
  }

  override async claim(taskId: string, annotatorId: string) {
    const task = this.tasks.get(taskId)!;
    if (task.status !== "pending") {
      throw new ApiFailure(409, { code: "claim_conflict", message: "taken", field: null });
    }
    task.status = "claimed";
    task.claimant = annotatorId;
    return task;
  }

  override async label(taskId: string, annotatorId: string, submission: any) {
    if (this.failNextLabelWith) {
      const failure = this.failNextLabelWith;
      this.failNextLabelWith = null;
      throw failure;
    }
    const task = this.tasks.get(taskId)!;
    task.status = "accepted";
    this.labels.push({ taskId, annotatorId, ...submission });
    return {
      id: taskId, document_id: task.document_id ?? taskId,
      question: submission.question,
      answer_text: CONTEXT.slice(submission.answer_start, submission.answer_end),
      answer_start: submission.answer_start, answer_end: submission.answer_end,
      provenance: "human", domain: "toy",
    };
  }
}

function flowWith(tasks: TaskView[]): [AnnotateFlow, FakeClient] {
  const client = new FakeClient(tasks);
  const flow = new AnnotateFlow(client, "b1", "ann-1",
                                { maxTokens: 8, stride: 2 });
  return [flow, client];
}

describe("AnnotateFlow", () => {
  it("claims the first available task and skips conflicts", async () => {
    const [flow, client] = flowWith([
      makeTask("t1", "claimed", "someone-else"),
      makeTask("t2"),
    ]);
    await flow.refresh();
    // t1 looks pending in a stale listing; make it so
    flow.tasks[0].status = "pending";
    const claimed = await flow.claimNext();
    expect(claimed?.task_id).toBe("t2");
    expect(client.tasks.get("t2")!.claimant).toBe("ann-1");
  });

  it("disables submit until a span and question exist", async () => {
    const [flow] = flowWith([makeTask("t1")]);
    await flow.refresh();
    await flow.claimNext();
    expect(flow.canSubmit()).toBe(false);
    flow.selectLocal(0, 3); // "the"
    expect(flow.canSubmit()).toBe(false); // question still empty
    flow.question = "which word ?";
    expect(flow.canSubmit()).toBe(true);
  });

  it("maps chunk-local highlights to context offsets", async () => {
    const [flow, client] = flowWith([makeTask("t1")]);
    await flow.refresh();
    await flow.claimNext();
    expect(flow.windows.length).toBeGreaterThan(1);
    flow.gotoChunk(1);
    const chunk = flow.chunkText();
    expect(chunk.startsWith("the code for alpha")).toBe(false);
    const local = chunk.indexOf("bravo");
    flow.selectLocal(local, local + "bravo".length);
    expect(flow.selectedText()).toBe("bravo");
    flow.question = "which key has code blue ?";
    expect(await flow.submit()).toBe(true);
    expect(client.labels).toHaveLength(1);
    const label = client.labels[0] as any;
    expect(CONTEXT.slice(label.answer_start, label.answer_end)).toBe("bravo");
  });

  it("keeps the selection when the server rejects the label", async () => {
    const [flow, client] = flowWith([makeTask("t1")]);
    await flow.refresh();
    await flow.claimNext();
    flow.selectLocal(0, 3);
    flow.question = "q ?";
    client.failNextLabelWith = new ApiFailure(422, {
      code: "validation_error", message: "span out of bounds", field: "answer_end",
    });
    // refresh() inside submit() would see the claim intact
    client.tasks.get("t1")!.status = "claimed";
    client.tasks.get("t1")!.claimant = "ann-1";
    expect(await flow.submit()).toBe(false);
    expect(flow.error).toContain("span out of bounds");
    expect(flow.selection).not.toBeNull();
  });

  it("notices an expired lease and returns to the queue", async () => {
    const [flow, client] = flowWith([makeTask("t1")]);
    await flow.refresh();
    await flow.claimNext();
    const task = client.tasks.get("t1")!;
    task.status = "pending";
    task.claimant = null;
    await flow.refresh();
    expect(flow.current).toBeNull();
    expect(flow.notice).toContain("lease expired");
  });

  it("reports batch completion for the progress banner", async () => {
    const [flow] = flowWith([
      makeTask("t1", "accepted"), makeTask("t2", "accepted"),
    ]);
    await flow.refresh();
    expect(flow.complete).toBe(true);
  });
});
