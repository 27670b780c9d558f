"""HTTP annotation service: exposes pending labeling tasks to human
annotators and collects validated span labels.

State lives in a TaskStore (single commit path per task, guarded by one
lock) persisted as an append-only event log plus a materialized snapshot.
A task moves pending -> claimed -> submitted -> accepted; server-side span
validation is the acceptance step, so a valid submission commits the last
two transitions atomically and an invalid one leaves the task claimed.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path

from alqa.corpus import QASample
from alqa.loop import AnnotationPending, AnnotationRequest, Annotator

log = logging.getLogger(__name__)

DEFAULT_LEASE_SECONDS = 30 * 60


class ServiceError(Exception):
    status_code = 400
    code = "bad_request"

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.message = message
        self.field = field_name

    def payload(self) -> dict:
        return {"code": self.code, "message": self.message, "field": self.field}


class NotFound(ServiceError):
    status_code = 404
    code = "not_found"


class ClaimConflict(ServiceError):
    status_code = 409
    code = "claim_conflict"


class DuplicateTask(ServiceError):
    status_code = 409
    code = "duplicate_task"


class ValidationFailure(ServiceError):
    status_code = 422
    code = "validation_error"


class NotClaimant(ServiceError):
    status_code = 403
    code = "not_claimant"


@dataclass
class AnnotationTask:
    task_id: str
    batch_id: str
    context: str
    seed_question: str | None = None
    document_id: str | None = None
    domain: str = ""
    status: str = "pending"
    claimant: str | None = None
    lease_expires: float | None = None
    created_at: float = 0.0
    updated_at: float = 0.0

    def view(self) -> dict:
        d = asdict(self)
        d.pop("lease_expires")
        return d


@dataclass
class AnnotationSubmission:
    task_id: str
    question: str
    answer_start: int
    answer_end: int
    annotator_id: str
    note: str = ""


class TaskStore:
    """All mutations funnel through one lock; reads see committed state."""

    def __init__(self, directory: str | Path | None = None,
                 lease_seconds: float = DEFAULT_LEASE_SECONDS,
                 clock=time.time):
        self._lock = threading.Lock()
        self.lease_seconds = lease_seconds
        self.clock = clock
        self.tasks: dict[str, AnnotationTask] = {}
        self.batches: dict[str, list[str]] = {}
        self.labels: dict[str, QASample] = {}
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._load()

    # -- persistence --------------------------------------------------------

    def _load(self) -> None:
        state_path = self.directory / "state.json"
        if not state_path.exists():
            return
        state = json.loads(state_path.read_text())
        self.tasks = {tid: AnnotationTask(**t) for tid, t in state["tasks"].items()}
        self.batches = state["batches"]
        self.labels = {tid: QASample(
            **{**s, "answer_char_span": tuple(s["answer_char_span"]),
               "alt_answers": tuple(s.get("alt_answers", ()))})
            for tid, s in state["labels"].items()}

    def _commit(self, event: str, payload: dict) -> None:
        if not self.directory:
            return
        with (self.directory / "events.jsonl").open("a") as fh:
            fh.write(json.dumps({"ts": self.clock(), "event": event,
                                 "payload": payload}) + "\n")
        state = {
            "tasks": {tid: asdict(t) for tid, t in self.tasks.items()},
            "batches": self.batches,
            "labels": {tid: {**asdict(s),
                             "answer_char_span": list(s.answer_char_span),
                             "alt_answers": list(s.alt_answers)}
                       for tid, s in self.labels.items()},
        }
        tmp = self.directory / "state.json.tmp"
        tmp.write_text(json.dumps(state))
        tmp.replace(self.directory / "state.json")

    # -- lease handling -----------------------------------------------------

    def _sweep_leases(self) -> None:
        now = self.clock()
        for task in self.tasks.values():
            if (task.status == "claimed" and task.lease_expires is not None
                    and task.lease_expires < now):
                task.status = "pending"
                task.claimant = None
                task.lease_expires = None
                task.updated_at = now
                self._commit("lease_expired", {"task_id": task.task_id})

    # -- operations ---------------------------------------------------------

    def publish_batch(self, tasks: list[dict], batch_id: str | None = None) -> str:
        """Atomically publish a batch; duplicate task ids reject the whole
        batch. Re-publishing an identical batch id with the same task ids is
        a no-op (idempotent for resumed loops)."""
        if not tasks:
            raise ValidationFailure("batch must contain at least one task", "tasks")
        with self._lock:
            batch_id = batch_id or f"batch-{uuid.uuid4().hex[:12]}"
            ids = [t["task_id"] for t in tasks]
            if batch_id in self.batches:
                if self.batches[batch_id] == ids:
                    return batch_id
                raise DuplicateTask(f"batch {batch_id} already exists with "
                                    "different tasks", "batch_id")
            if len(set(ids)) != len(ids):
                raise DuplicateTask("duplicate task ids within batch", "tasks")
            existing = [tid for tid in ids if tid in self.tasks]
            if existing:
                raise DuplicateTask(f"task ids already published: {existing[:3]}",
                                    "tasks")
            now = self.clock()
            for t in tasks:
                if not t.get("context"):
                    raise ValidationFailure(f"task {t['task_id']} has no context",
                                            "context")
            for t in tasks:
                self.tasks[t["task_id"]] = AnnotationTask(
                    task_id=t["task_id"], batch_id=batch_id,
                    context=t["context"], seed_question=t.get("seed_question"),
                    document_id=t.get("document_id"), domain=t.get("domain", ""),
                    created_at=now, updated_at=now)
            self.batches[batch_id] = ids
            self._commit("publish", {"batch_id": batch_id, "task_ids": ids})
            return batch_id

    def _get_task(self, task_id: str) -> AnnotationTask:
        task = self.tasks.get(task_id)
        if task is None:
            raise NotFound(f"unknown task {task_id}", "task_id")
        return task

    def claim(self, task_id: str, annotator_id: str) -> AnnotationTask:
        if not annotator_id:
            raise ValidationFailure("annotator_id required", "annotator_id")
        with self._lock:
            self._sweep_leases()
            task = self._get_task(task_id)
            if task.status == "claimed":
                raise ClaimConflict(f"task {task_id} already claimed by "
                                    f"{task.claimant}", "task_id")
            if task.status == "accepted":
                raise ClaimConflict(f"task {task_id} is already labeled",
                                    "task_id")
            task.status = "claimed"
            task.claimant = annotator_id
            now = self.clock()
            task.lease_expires = now + self.lease_seconds
            task.updated_at = now
            self._commit("claim", {"task_id": task_id, "annotator_id": annotator_id})
            return task

    def release(self, task_id: str, annotator_id: str) -> AnnotationTask:
        with self._lock:
            task = self._get_task(task_id)
            if task.status != "claimed":
                raise ClaimConflict(f"task {task_id} is not claimed", "task_id")
            if task.claimant != annotator_id:
                raise NotClaimant(f"task {task_id} is claimed by {task.claimant}",
                                  "annotator_id")
            task.status = "pending"
            task.claimant = None
            task.lease_expires = None
            task.updated_at = self.clock()
            self._commit("release", {"task_id": task_id})
            return task

    def submit(self, sub: AnnotationSubmission) -> QASample:
        """Validate and persist a label; the task commits claimed ->
        submitted -> accepted in one step. Invalid spans leave it claimed."""
        with self._lock:
            self._sweep_leases()
            task = self._get_task(sub.task_id)
            resubmission = task.status == "accepted"
            if task.status not in ("claimed", "accepted"):
                raise ClaimConflict(f"task {sub.task_id} must be claimed first",
                                    "task_id")
            if task.claimant != sub.annotator_id:
                raise NotClaimant(f"task {sub.task_id} belongs to {task.claimant}",
                                  "annotator_id")
            if not sub.question or not sub.question.strip():
                raise ValidationFailure("question must be nonempty", "question")
            start, end = sub.answer_start, sub.answer_end
            if not (isinstance(start, int) and isinstance(end, int)):
                raise ValidationFailure("span offsets must be integers", "answer_start")
            if not (0 <= start < end <= len(task.context)):
                raise ValidationFailure(
                    f"span ({start},{end}) out of bounds for context of "
                    f"length {len(task.context)}", "answer_end")

            sample = QASample(
                id=task.task_id, document_id=task.document_id or task.task_id,
                question=sub.question, answer_text=task.context[start:end],
                answer_char_span=(start, end), provenance="human",
                domain=task.domain)
            now = self.clock()
            task.status = "submitted"
            task.updated_at = now
            self._commit("submit", {"task_id": task.task_id,
                                    "annotator_id": sub.annotator_id,
                                    "resubmission": resubmission,
                                    "note": sub.note})
            task.status = "accepted"
            task.updated_at = self.clock()
            self.labels[task.task_id] = sample
            self._commit("accept", {"task_id": task.task_id})
            if resubmission:
                log.info("task %s resubmitted by %s", task.task_id,
                         sub.annotator_id)
            return sample

    def batch_tasks(self, batch_id: str) -> list[AnnotationTask]:
        with self._lock:
            self._sweep_leases()
            if batch_id not in self.batches:
                raise NotFound(f"unknown batch {batch_id}", "batch_id")
            return [self.tasks[tid] for tid in self.batches[batch_id]]

    def batch_status(self, batch_id: str) -> dict:
        counts = {"pending": 0, "claimed": 0, "submitted": 0, "accepted": 0}
        for task in self.batch_tasks(batch_id):
            counts[task.status] += 1
        return counts

    def batch_labels(self, batch_id: str) -> list[QASample]:
        return [self.labels[t.task_id] for t in self.batch_tasks(batch_id)
                if t.task_id in self.labels]


# ---------------------------------------------------------------------------
# HTTP surface
# ---------------------------------------------------------------------------

def create_app(store: TaskStore):
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse
    from fastapi.staticfiles import StaticFiles

    app = FastAPI(title="annotation-service")

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status_code, content=exc.payload())

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.post("/api/batches")
    def publish(body: dict):
        batch_id = store.publish_batch(body.get("tasks", []),
                                       body.get("batch_id"))
        return {"batch_id": batch_id}

    @app.get("/api/batches/{batch_id}/queries")
    def queries(batch_id: str):
        return {"tasks": [t.view() for t in store.batch_tasks(batch_id)]}

    @app.get("/api/batches/{batch_id}/status")
    def status(batch_id: str):
        return store.batch_status(batch_id)

    @app.get("/api/batches/{batch_id}/labels")
    def labels(batch_id: str):
        from alqa.corpus import sample_to_dict
        return {"samples": [sample_to_dict(s) for s in store.batch_labels(batch_id)]}

    @app.post("/api/tasks/{task_id}/claim")
    def claim(task_id: str, body: dict):
        return store.claim(task_id, body.get("annotator_id", "")).view()

    @app.post("/api/tasks/{task_id}/release")
    def release(task_id: str, body: dict):
        return store.release(task_id, body.get("annotator_id", "")).view()

    @app.post("/api/tasks/{task_id}/label")
    def label(task_id: str, body: dict):
        from alqa.corpus import sample_to_dict
        sub = AnnotationSubmission(
            task_id=task_id,
            question=body.get("question", ""),
            answer_start=body.get("answer_start", -1),
            answer_end=body.get("answer_end", -1),
            annotator_id=body.get("annotator_id", ""),
            note=body.get("note", ""))
        return sample_to_dict(store.submit(sub))

    static_dir = Path(__file__).parent / "static"
    if static_dir.exists():
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="console")
    return app


def serve(store_dir: str | Path | None, host: str = "127.0.0.1",
          port: int = 8787) -> None:
    import uvicorn

    store = TaskStore(store_dir)
    uvicorn.run(create_app(store), host=host, port=port, log_level="warning")


# ---------------------------------------------------------------------------
# Live annotator (loop-side client)
# ---------------------------------------------------------------------------

class LiveAnnotator(Annotator):
    """Routes selection batches to the annotation service and blocks until
    every task is accepted. Raises AnnotationPending on timeout so the loop
    can checkpoint and resume later.

    client: anything with get(url)/post(url, json=...) returning responses
    with .status_code and .json(): a requests.Session in production, a
    FastAPI TestClient in tests.
    """

    def __init__(self, client=None, base_url: str = "",
                 poll_interval: float = 2.0, timeout: float | None = None,
                 sleep=time.sleep):
        if client is None:
            import requests
            client = requests.Session()
        self.client = client
        self.base_url = base_url.rstrip("/")
        self.poll_interval = poll_interval
        self.timeout = timeout
        self.sleep = sleep

    def _url(self, path: str) -> str:
        return f"{self.base_url}{path}"

    def request(self, candidates: list[AnnotationRequest],
                batch_key: str | None = None):
        if not candidates:
            return []
        batch_id = batch_key or f"batch-{uuid.uuid4().hex[:12]}"
        tasks = [{"task_id": c.candidate_id, "context": c.context,
                  "seed_question": c.seed_question,
                  "document_id": getattr(c, "document_id", None),
                  "domain": getattr(c, "domain", "")}
                 for c in candidates]
        resp = self.client.post(self._url("/api/batches"),
                                json={"batch_id": batch_id, "tasks": tasks})
        if resp.status_code not in (200, 201):
            raise RuntimeError(f"publish failed: {resp.status_code} {resp.json()}")

        deadline = None if self.timeout is None else time.monotonic() + self.timeout
        while True:
            status = self.client.get(
                self._url(f"/api/batches/{batch_id}/status")).json()
            if status["accepted"] == len(tasks):
                break
            if deadline is not None and time.monotonic() > deadline:
                raise AnnotationPending(batch_id)
            self.sleep(self.poll_interval)

        from alqa.corpus import sample_from_dict
        payload = self.client.get(
            self._url(f"/api/batches/{batch_id}/labels")).json()
        return [sample_from_dict(s) for s in payload["samples"]]
