"""Extractive QA over question + context with sliding-window chunked
inference: per-chunk best spans are aggregated by taking the global
argmax of start+end log-probability across chunks.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from alqa.backends.base import ReaderBackend
from alqa.corpus import (
    Document,
    QASample,
    Tokenizer,
    chunk_context,
    exact_match,
    max_over_golds,
    sample_gold_answers,
    token_f1,
)

log = logging.getLogger(__name__)


@dataclass
class ReaderTrainConfig:
    learning_rate: float = 3e-5
    batch_size: int = 24
    max_input_tokens: int = 512
    stride: int = 128
    question_truncation: int | None = None
    max_answer_tokens: int = 384
    encoder_weight_decay_to_pretrained: float = 1e-7
    epochs: int = 2

    def __post_init__(self):
        if self.stride >= self.max_input_tokens:
            raise ValueError("stride must be < max_input_tokens")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "learning_rate", "batch_size", "max_input_tokens", "stride",
            "question_truncation", "max_answer_tokens",
            "encoder_weight_decay_to_pretrained", "epochs")}


@dataclass
class SpanPrediction:
    answer_text: str
    char_span: tuple[int, int]
    score: float
    chunk_index: int


@dataclass
class EvalReport:
    em: float
    f1: float
    n: int
    per_sample: list[dict] = field(default_factory=list)

    def to_dict(self, with_per_sample: bool = True) -> dict:
        d = {"em": self.em, "f1": self.f1, "n": self.n}
        if with_per_sample:
            d["per_sample"] = self.per_sample
        return d


def _question_ids(sample_question: str, tokenizer: Tokenizer,
                  cfg: ReaderTrainConfig) -> list[int]:
    ids = tokenizer.encode(sample_question)
    if cfg.question_truncation is not None:
        ids = ids[:cfg.question_truncation]
    return ids


def _context_budget(q_len: int, cfg: ReaderTrainConfig) -> int:
    budget = cfg.max_input_tokens - q_len
    if budget <= cfg.stride:
        # long questions squeeze the window; keep it just above the stride
        budget = cfg.stride + 1
    return budget


def sample_chunks(sample: QASample, document: Document, tokenizer: Tokenizer,
                  cfg: ReaderTrainConfig, with_answer: bool = True):
    q_ids = _question_ids(sample.question, tokenizer, cfg)
    budget = _context_budget(len(q_ids), cfg)
    chunks = chunk_context(document, budget, cfg.stride, tokenizer,
                           answer_span=sample.answer_char_span if with_answer else None)
    return q_ids, chunks


def build_features(samples, documents: dict[str, Document],
                   tokenizer: Tokenizer, cfg: ReaderTrainConfig):
    """Training features: one per chunk fully containing the answer.

    Answerless chunks carry no supervision signal and are dropped. Start/end
    labels are token indices relative to the chunk.
    """
    features = []
    skipped = 0
    for sample in samples:
        document = documents[sample.document_id]
        q_ids, chunks = sample_chunks(sample, document, tokenizer, cfg)
        offs = tokenizer.offsets(document.text)
        a_start, a_end = sample.answer_char_span
        covered = [i for i, (s, e) in enumerate(offs) if s < a_end and e > a_start]
        usable = 0
        for chunk in chunks:
            if not chunk.contains_answer:
                continue
            w_start = chunk.window_token_span[0]
            features.append((q_ids, tokenizer.encode(chunk.text),
                             covered[0] - w_start, covered[-1] - w_start))
            usable += 1
        if usable == 0:
            skipped += 1
    if skipped:
        log.info("dropped %d samples with no answer-bearing chunk", skipped)
    return features


def train_reader(
    backend: ReaderBackend,
    samples,
    cfg: ReaderTrainConfig,
    dev,
    documents: dict[str, Document],
    tokenizer: Tokenizer,
    seed: int = 0,
):
    """Fine-tune on answer-bearing chunks; keeps the best-dev-F1 checkpoint.

    Staged fine-tuning (synthetic then annotated) is two successive calls;
    model state carries over between them.
    """
    if not samples:
        raise ValueError("no training samples")
    features = build_features(samples, documents, tokenizer, cfg)
    if not features:
        raise ValueError("no trainable chunk: every sample's answer falls "
                         "outside all context windows")

    backend.reset_optimizer()
    if hasattr(backend, "begin_training"):
        backend.begin_training(cfg.learning_rate, cfg.epochs, 0)

    entries = []
    best_state, best_f1, best_epoch = backend.get_state(), -1.0, 0
    if dev:
        best_f1 = evaluate(backend, dev, cfg, documents, tokenizer).f1
        entries.append({"epoch": 0, "train_loss": None, "dev_f1": best_f1})
    for epoch in range(1, cfg.epochs + 1):
        train_loss = backend.train_epoch(features, cfg.learning_rate,
                                         cfg.batch_size, seed + epoch)
        if math.isnan(train_loss):
            raise RuntimeError(f"training diverged at epoch {epoch}")
        entry = {"epoch": epoch, "train_loss": train_loss}
        if dev:
            dev_f1 = evaluate(backend, dev, cfg, documents, tokenizer).f1
            entry["dev_f1"] = dev_f1
            if dev_f1 > best_f1:
                best_f1, best_epoch = dev_f1, epoch
                best_state = backend.get_state()
        entries.append(entry)
    if dev:
        backend.set_state(best_state)
    return {"entries": entries, "best_epoch": best_epoch, "best_dev_f1": best_f1}


def best_span_in_chunk(start_logprobs, end_logprobs, max_answer_tokens: int):
    """Highest-scoring (start, end) pair with start <= end and span length
    <= max_answer_tokens. Returns (start, end_inclusive, score)."""
    n = len(start_logprobs)
    best = None
    best_start_idx = 0
    for end in range(n):
        window_lo = max(0, end - max_answer_tokens + 1)
        if end == 0:
            best_start_idx = 0
        else:
            if start_logprobs[end] > start_logprobs[best_start_idx]:
                best_start_idx = end
        if best_start_idx < window_lo:
            best_start_idx = window_lo
            for s in range(window_lo, end + 1):
                if start_logprobs[s] > start_logprobs[best_start_idx]:
                    best_start_idx = s
        score = float(start_logprobs[best_start_idx] + end_logprobs[end])
        if best is None or score > best[2]:
            best = (best_start_idx, end, score)
    return best


def predict(
    backend: ReaderBackend,
    question: str,
    document: Document,
    cfg: ReaderTrainConfig,
    tokenizer: Tokenizer,
) -> SpanPrediction:
    """Best span over all chunks' predictions."""
    if not document.text.strip():
        raise ValueError(f"document {document.id} is empty")
    q_ids = _question_ids(question, tokenizer, cfg)
    budget = _context_budget(len(q_ids), cfg)
    chunks = chunk_context(document, budget, cfg.stride, tokenizer)
    offs = tokenizer.offsets(document.text)

    best = None
    for ci, chunk in enumerate(chunks):
        ctx_ids = tokenizer.encode(chunk.text)
        start_lp, end_lp = backend.span_distributions(q_ids, ctx_ids)
        s, e, score = best_span_in_chunk(start_lp, end_lp, cfg.max_answer_tokens)
        if best is None or score > best[0]:
            w_start = chunk.window_token_span[0]
            char_start = offs[w_start + s][0]
            char_end = offs[w_start + e][1]
            best = (score, ci, char_start, char_end)

    score, ci, char_start, char_end = best
    return SpanPrediction(
        answer_text=document.text[char_start:char_end],
        char_span=(char_start, char_end),
        score=score,
        chunk_index=ci,
    )


def evaluate(
    backend: ReaderBackend,
    samples,
    cfg: ReaderTrainConfig,
    documents: dict[str, Document],
    tokenizer: Tokenizer,
) -> EvalReport:
    """Mean EM and token-level F1, max over gold answers per sample.

    Samples whose answer no chunk can contain still count (the reader just
    cannot get them right), mirroring degraded long-document evaluation.
    """
    per_sample = []
    em_total, f1_total = 0.0, 0.0
    for sample in samples:
        document = documents[sample.document_id]
        pred = predict(backend, sample.question, document, cfg, tokenizer)
        golds = sample_gold_answers(sample)
        em = max_over_golds(exact_match, pred.answer_text, golds)
        f1 = max_over_golds(token_f1, pred.answer_text, golds)
        em_total += em
        f1_total += f1
        per_sample.append({"id": sample.id, "prediction": pred.answer_text,
                           "em": em, "f1": f1})
    n = len(samples)
    return EvalReport(
        em=em_total / n if n else 0.0,
        f1=f1_total / n if n else 0.0,
        n=n,
        per_sample=per_sample,
    )


def save_reader_checkpoint(directory, backend, tokenizer, cfg,
                           train_log: dict) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    backend.save(directory)
    tokenizer.save(directory / "tokenizer.json")
    (directory / "metadata.json").write_text(json.dumps({
        "backend_id": backend.backend_id,
        "tokenizer_id": tokenizer.tokenizer_id,
        "train_config": cfg.to_dict(),
        "best_epoch": train_log.get("best_epoch"),
        "best_dev_f1": train_log.get("best_dev_f1"),
    }, indent=2))
    with (directory / "training_log.jsonl").open("w") as fh:
        for entry in train_log.get("entries", []):
            fh.write(json.dumps(entry) + "\n")
