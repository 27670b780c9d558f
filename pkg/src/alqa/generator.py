"""Two-step QA-pair generation: one conditional sequence model trained to
produce a question from a context and an answer from context+question.

Training pairs are built per context chunk (only chunks containing the
answer are usable); inference samples a question with nucleus/top-k
truncation, then beam-decodes an answer conditioned on context and the
decoded question. Pairs failing validity (missing end tokens, answer not
in context) are discarded.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from alqa.backends.base import GenerationBackend
from alqa.corpus import Document, QASample, Tokenizer, chunk_context

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class GenInputLayout:
    """Token budgets and special markers for the two-step input layout.

    max_question_tokens is an upper bound on the question body; it is
    additionally clamped so the second-step input (context + question with
    its delimiters) never exceeds max_total_tokens.
    """

    q_open: str = "<q>"
    q_close: str = "</q>"
    a_open: str = "<a>"
    a_close: str = "</a>"
    max_source_tokens: int = 724
    max_question_tokens: int = 300
    max_total_tokens: int = 1024
    question_truncation: int | None = None
    chunk_stride: int = 128
    max_answer_tokens: int = 300

    def __post_init__(self):
        if self.question_budget() < 1:
            raise ValueError(
                "layout leaves no room for a question: "
                f"source {self.max_source_tokens} + delimiters exceed "
                f"total {self.max_total_tokens}")

    @property
    def specials(self) -> tuple[str, str, str, str]:
        return (self.q_open, self.q_close, self.a_open, self.a_close)

    def question_budget(self) -> int:
        return min(self.max_question_tokens,
                   self.max_total_tokens - self.max_source_tokens - 2)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "q_open", "q_close", "a_open", "a_close", "max_source_tokens",
            "max_question_tokens", "max_total_tokens", "question_truncation",
            "chunk_stride", "max_answer_tokens")}

    @classmethod
    def from_dict(cls, d: dict) -> "GenInputLayout":
        return cls(**d)


@dataclass
class GenTrainConfig:
    epochs_source: int = 5
    epochs_target: int = 10
    learning_rate: float = 3e-5
    batch_size: int = 24
    warmup_fraction: float = 0.10
    early_stopping: bool = True
    patience: int | None = None

    def __post_init__(self):
        if min(self.epochs_source, self.epochs_target, self.batch_size) <= 0:
            raise ValueError("epochs and batch size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ValueError("warmup_fraction must be in [0,1]")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "epochs_source", "epochs_target", "learning_rate", "batch_size",
            "warmup_fraction", "early_stopping", "patience")}


@dataclass
class DecodeConfig:
    nucleus_p: float = 0.95
    top_k: int = 20
    beam_size: int = 10
    question_sampling: bool = True  # False: beam-decode the question too
    seed: int = 0
    filter_order: str = "topk_then_nucleus"

    def with_seed(self, seed: int) -> "DecodeConfig":
        return replace(self, seed=seed)


@dataclass
class GeneratedPair:
    question: str
    answer_text: str
    answer_char_span: tuple[int, int]
    question_token_ids: list[int]
    answer_token_ids: list[int]
    question_step_logprobs: list[float]
    answer_step_logprobs: list[float]

    @property
    def logprob_sum(self) -> float:
        return sum(self.question_step_logprobs) + sum(self.answer_step_logprobs)


# ---------------------------------------------------------------------------
# Training pairs
# ---------------------------------------------------------------------------

def _special_ids(tokenizer: Tokenizer, layout: GenInputLayout) -> tuple[int, int, int, int]:
    return tuple(tokenizer.add_token(t) if hasattr(tokenizer, "add_token")
                 else tokenizer.token_to_id(t) for t in layout.specials)


def build_training_pairs(
    sample: QASample,
    document: Document,
    layout: GenInputLayout,
    tokenizer: Tokenizer,
) -> list[tuple[list[int], list[int]]]:
    """Emit (context -> question) and (context+question -> answer) pairs for
    every chunk that fully contains the answer."""
    qo, qc, ao, ac = _special_ids(tokenizer, layout)
    chunks = chunk_context(document, layout.max_source_tokens, layout.chunk_stride,
                           tokenizer, answer_span=sample.answer_char_span)
    usable = [c for c in chunks if c.contains_answer]
    if not usable:
        log.info("sample %s skipped: answer absent from every chunk", sample.id)
        return []

    q_ids = tokenizer.encode(sample.question)
    if layout.question_truncation is not None:
        q_ids = q_ids[:layout.question_truncation]
    q_ids = q_ids[:layout.question_budget()]
    ans_ids = tokenizer.encode(sample.answer_text)

    pairs = []
    for chunk in usable:
        ctx_ids = tokenizer.encode(chunk.text)
        pairs.append((ctx_ids, [qo, *q_ids, qc]))
        pairs.append((ctx_ids + [qo, *q_ids, qc], [ao, *ans_ids, ac]))
    return pairs


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainingLog:
    entries: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_loss: float = math.inf

    def write_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry) + "\n")


def train_generator(
    backend: GenerationBackend,
    pairs,
    cfg: GenTrainConfig,
    dev,
    epochs: int | None = None,
    seed: int = 0,
) -> TrainingLog:
    """Cross-entropy fine-tuning; keeps the checkpoint with minimal dev loss.

    Epoch 0 records the initialization dev loss; the best state over epochs
    0..E is restored on the backend before returning.
    """
    if not pairs:
        raise ValueError("no training pairs")
    if not dev:
        raise ValueError("dev set must be nonempty")
    epochs = epochs if epochs is not None else cfg.epochs_target

    backend.reset_optimizer()
    total_steps = epochs * max(1, math.ceil(len(pairs) / cfg.batch_size))
    warmup_steps = int(cfg.warmup_fraction * total_steps)
    if hasattr(backend, "begin_training"):
        backend.begin_training(cfg.learning_rate, total_steps, warmup_steps)

    train_log = TrainingLog()
    init_dev = backend.loss(dev)
    train_log.entries.append({"epoch": 0, "train_loss": None, "dev_loss": init_dev})
    best_state = backend.get_state() if cfg.early_stopping else None
    best_dev, best_epoch = init_dev, 0
    since_best = 0

    for epoch in range(1, epochs + 1):
        train_loss = backend.train_epoch(pairs, cfg.learning_rate,
                                         cfg.batch_size, seed + epoch)
        dev_loss = backend.loss(dev)
        if math.isnan(dev_loss) or math.isnan(train_loss):
            raise TrainingDiverged(
                f"loss became NaN at epoch {epoch} "
                f"(train={train_loss}, dev={dev_loss}, lr={cfg.learning_rate})")
        train_log.entries.append(
            {"epoch": epoch, "train_loss": train_loss, "dev_loss": dev_loss})
        if dev_loss < best_dev:
            best_dev, best_epoch, since_best = dev_loss, epoch, 0
            if cfg.early_stopping:
                best_state = backend.get_state()
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                break

    if cfg.early_stopping and best_state is not None:
        backend.set_state(best_state)
    train_log.best_epoch = best_epoch
    train_log.best_dev_loss = best_dev
    return train_log


# ---------------------------------------------------------------------------
# Two-step decoding
# ---------------------------------------------------------------------------

def find_answer_span(context: str, answer: str) -> tuple[int, int] | None:
    """First occurrence of the answer in the context, tolerant to
    whitespace differences introduced by detokenization."""
    if not answer:
        return None
    pos = context.find(answer)
    if pos >= 0:
        return (pos, pos + len(answer))
    pattern = r"\s+".join(re.escape(tok) for tok in answer.split())
    if not pattern:
        return None
    m = re.search(pattern, context)
    return m.span() if m else None


def generate_pair_verbose(
    backend: GenerationBackend,
    tokenizer: Tokenizer,
    context_text: str,
    layout: GenInputLayout,
    cfg: DecodeConfig,
) -> tuple[GeneratedPair | None, str | None]:
    """generate_pair plus the rejection reason, for synthesis reports."""
    qo, qc, ao, ac = _special_ids(tokenizer, layout)
    ctx_ids = tokenizer.encode(context_text)
    if len(ctx_ids) > layout.max_source_tokens:
        raise ValueError(
            f"context of {len(ctx_ids)} tokens exceeds the source budget "
            f"{layout.max_source_tokens}; chunk before decoding")

    q_budget = layout.question_budget()
    if cfg.question_sampling:
        q_seq = backend.sample(ctx_ids, qo, qc, cfg.nucleus_p, cfg.top_k,
                               q_budget + 1, cfg.seed, cfg.filter_order)
    else:
        q_seq = backend.beam_decode(ctx_ids, qo, qc, cfg.beam_size, q_budget + 1)
    if qc not in q_seq:
        return None, "missing_question_end"
    q_ids = q_seq[:q_seq.index(qc)]
    if not q_ids:
        return None, "empty_question"
    if layout.question_truncation is not None:
        q_ids = q_ids[:layout.question_truncation]

    src2 = ctx_ids + [qo, *q_ids, qc]
    a_seq = backend.beam_decode(src2, ao, ac, cfg.beam_size,
                                layout.max_answer_tokens + 1)
    if ac not in a_seq:
        return None, "missing_answer_end"
    a_ids = a_seq[:a_seq.index(ac)]
    if not a_ids:
        return None, "empty_answer"

    decoded_answer = tokenizer.decode(a_ids)
    span = find_answer_span(context_text, decoded_answer)
    if span is None:
        return None, "answer_not_in_context"

    pair = GeneratedPair(
        question=tokenizer.decode(q_ids),
        answer_text=context_text[span[0]:span[1]],
        answer_char_span=span,
        question_token_ids=q_ids,
        answer_token_ids=a_ids,
        question_step_logprobs=backend.sequence_logprobs(ctx_ids, [qo, *q_ids, qc]),
        answer_step_logprobs=backend.sequence_logprobs(src2, [ao, *a_ids, ac]),
    )
    return pair, None


def generate_pair(backend, tokenizer, context_text, layout, cfg):
    pair, _ = generate_pair_verbose(backend, tokenizer, context_text, layout, cfg)
    return pair


def score_answer_sentence(
    backend: GenerationBackend,
    tokenizer: Tokenizer,
    layout: GenInputLayout,
    context_tokens: list[int],
    question_tokens: list[int],
    answer_tokens: list[int],
) -> float:
    """Length-normalized answer log-probability: mean per-step log
    p(a_t | a_<t, c, q); the end token counts as a step."""
    if not answer_tokens:
        raise ValueError("cannot score a zero-length answer")
    qo, qc, ao, ac = _special_ids(tokenizer, layout)
    source = list(context_tokens) + [qo, *question_tokens, qc]
    steps = backend.sequence_logprobs(source, [ao, *answer_tokens, ac])
    return sum(steps) / len(steps)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_generator_checkpoint(directory, backend, tokenizer, layout, cfg,
                              train_log: TrainingLog) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    backend.save(directory)
    tokenizer.save(directory / "tokenizer.json")
    (directory / "metadata.json").write_text(json.dumps({
        "backend_id": backend.backend_id,
        "tokenizer_id": tokenizer.tokenizer_id,
        "layout": layout.to_dict(),
        "train_config": cfg.to_dict(),
        "dev_loss": train_log.best_dev_loss,
        "best_epoch": train_log.best_epoch,
    }, indent=2))
    train_log.write_jsonl(directory / "training_log.jsonl")
