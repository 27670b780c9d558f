"""Corpus-scale synthetic QA production and sample filtering.

Documents shorter than the eligibility floor are skipped; eligible ones
contribute up to questions_per_context decoded pairs from their leading
source-budget tokens. Two filters prune the output: keep the top-n pairs
per context by generator sequence log-probability, and round-trip
consistency (drop pairs the reader cannot reproduce).
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from alqa.corpus import (
    QASample,
    Tokenizer,
    exact_match,
    sample_from_dict,
    sample_to_dict,
    token_f1,
)
from alqa.generator import DecodeConfig, GenInputLayout, generate_pair_verbose
from alqa.reader import ReaderTrainConfig, predict

log = logging.getLogger(__name__)

FILTER_MODES = ("lm", "rtcons", "both", "none")


@dataclass
class SyntheticSample(QASample):
    generator_logprob_sum: float = 0.0
    lm_filter_rank: int | None = None
    rtcons_pass: bool | None = None


@dataclass
class SynthesisConfig:
    max_documents: int = 100000
    min_context_tokens: int = 100
    questions_per_context: int = 10
    lm_filter_top_n: int = 5
    filter_mode: str = "lm"
    lm_filter_scope: str = "per_context"  # or "global"

    def __post_init__(self):
        if min(self.max_documents, self.min_context_tokens,
               self.questions_per_context, self.lm_filter_top_n) <= 0:
            raise ValueError("synthesis config values must be positive")
        if self.filter_mode not in FILTER_MODES:
            raise ValueError(f"filter_mode must be one of {FILTER_MODES}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "max_documents", "min_context_tokens", "questions_per_context",
            "lm_filter_top_n", "filter_mode", "lm_filter_scope")}


@dataclass
class SynthesisReport:
    documents_seen: int = 0
    documents_skipped: int = 0
    documents_processed: int = 0
    pairs_attempted: int = 0
    pairs_valid: int = 0
    rejection_reasons: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "documents_seen": self.documents_seen,
            "documents_skipped": self.documents_skipped,
            "documents_processed": self.documents_processed,
            "pairs_attempted": self.pairs_attempted,
            "pairs_valid": self.pairs_valid,
            "rejection_reasons": dict(self.rejection_reasons),
        }


def synthesize_corpus(
    backend,
    documents,
    cfg: SynthesisConfig,
    layout: GenInputLayout,
    tokenizer: Tokenizer,
    base_seed: int = 0,
    decode_cfg: DecodeConfig | None = None,
) -> tuple[list[SyntheticSample], SynthesisReport]:
    """Generate up to questions_per_context valid pairs per eligible document.

    Documents beyond the generator's source budget contribute their leading
    max_source_tokens only. Question i of context j draws its sampling seed
    as base_seed + j*10 + i, reproducible yet diverse.
    """
    if not documents:
        raise ValueError("no documents to synthesize from")
    decode_cfg = decode_cfg or DecodeConfig()
    report = SynthesisReport()
    samples: list[SyntheticSample] = []

    for ctx_index, doc in enumerate(documents):
        if report.documents_seen >= cfg.max_documents:
            break
        report.documents_seen += 1
        if doc.token_count < cfg.min_context_tokens:
            report.documents_skipped += 1
            continue
        report.documents_processed += 1

        offs = tokenizer.offsets(doc.text)
        if len(offs) > layout.max_source_tokens:
            context_text = doc.text[:offs[layout.max_source_tokens - 1][1]]
        else:
            context_text = doc.text

        for qi in range(cfg.questions_per_context):
            report.pairs_attempted += 1
            seed = base_seed + ctx_index * 10 + qi
            pair, reason = generate_pair_verbose(
                backend, tokenizer, context_text, layout,
                decode_cfg.with_seed(seed))
            if pair is None:
                report.rejection_reasons[reason] += 1
                continue
            report.pairs_valid += 1
            samples.append(SyntheticSample(
                id=f"syn-{doc.id}-{qi:02d}",
                document_id=doc.id,
                question=pair.question,
                answer_text=pair.answer_text,
                answer_char_span=pair.answer_char_span,
                provenance="synthetic",
                domain=doc.domain,
                generator_logprob_sum=pair.logprob_sum,
            ))
    log.info("synthesis: %s", report.to_dict())
    return samples, report


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------

def lm_score_filter(samples, top_n: int, scope: str = "per_context"):
    """Keep the top-n samples per context by sequence log-probability.

    Ranks (1-based, per group) are recorded on every sample. Score ties are
    broken by lexicographic sample id, smaller id surviving. Global scope
    pools all contexts and keeps top_n x (number of distinct contexts).
    """
    if scope not in ("per_context", "global"):
        raise ValueError(f"unknown lm filter scope {scope!r}")
    groups: dict[str, list] = defaultdict(list)
    for sample in samples:
        key = sample.document_id if scope == "per_context" else "__all__"
        groups[key].append(sample)

    n_contexts = len({s.document_id for s in samples})
    kept = []
    for key in sorted(groups):
        group = sorted(groups[key],
                       key=lambda s: (-s.generator_logprob_sum, s.id))
        budget = top_n if scope == "per_context" else top_n * n_contexts
        for rank, sample in enumerate(group, start=1):
            sample.lm_filter_rank = rank
            if rank <= budget:
                kept.append(sample)
    return kept


def rtcons_filter(
    samples,
    reader_backend,
    documents,
    tokenizer: Tokenizer,
    reader_cfg: ReaderTrainConfig | None = None,
    match: str = "exact_match",
    f1_threshold: float = 0.5,
    report: dict | None = None,
):
    """Round-trip consistency: keep a pair iff the reader's answer for the
    generated question matches the generated answer.

    documents: mapping document_id -> Document. Prediction failures drop the
    sample and are counted separately in `report`.
    """
    if match not in ("exact_match", "token_f1"):
        raise ValueError(f"unknown rtcons match mode {match!r}")
    reader_cfg = reader_cfg or ReaderTrainConfig()
    kept = []
    failures = 0
    for sample in samples:
        doc = documents[sample.document_id]
        try:
            pred = predict(reader_backend, sample.question, doc, reader_cfg,
                           tokenizer)
        except Exception:
            log.exception("rtcons prediction failed for %s", sample.id)
            failures += 1
            sample.rtcons_pass = None
            continue
        if match == "exact_match":
            ok = exact_match(pred.answer_text, sample.answer_text)
        else:
            ok = token_f1(pred.answer_text, sample.answer_text) >= f1_threshold
        sample.rtcons_pass = bool(ok)
        if ok:
            kept.append(sample)
    if report is not None:
        report["prediction_failures"] = failures
        report["kept"] = len(kept)
        report["discarded"] = len(samples) - len(kept) - failures
    return kept


def synthetic_to_dict(sample: SyntheticSample) -> dict:
    record = sample_to_dict(sample)
    record["generator_logprob_sum"] = sample.generator_logprob_sum
    record["lm_filter_rank"] = sample.lm_filter_rank
    record["rtcons_pass"] = sample.rtcons_pass
    return record


def synthetic_from_dict(record: dict) -> SyntheticSample:
    base = sample_from_dict({k: v for k, v in record.items()
                             if k not in ("generator_logprob_sum",
                                          "lm_filter_rank", "rtcons_pass")})
    return SyntheticSample(
        **base.__dict__,
        generator_logprob_sum=record.get("generator_logprob_sum", 0.0),
        lm_filter_rank=record.get("lm_filter_rank"),
        rtcons_pass=record.get("rtcons_pass"))


def write_synthetic(samples, path) -> None:
    import json
    from pathlib import Path

    with Path(path).open("w") as fh:
        for s in samples:
            fh.write(json.dumps(synthetic_to_dict(s)) + "\n")


def load_synthetic(path) -> list[SyntheticSample]:
    import json
    from pathlib import Path

    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(synthetic_from_dict(json.loads(line)))
    return out


def apply_filters(
    samples,
    cfg: SynthesisConfig,
    reader_backend=None,
    documents=None,
    tokenizer=None,
    reader_cfg=None,
    report: dict | None = None,
):
    """Run the configured filter pipeline; LM filtering runs first in
    "both" mode (it is the cheaper of the two)."""
    out = list(samples)
    if cfg.filter_mode in ("lm", "both"):
        out = lm_score_filter(out, cfg.lm_filter_top_n, cfg.lm_filter_scope)
    if cfg.filter_mode in ("rtcons", "both"):
        if reader_backend is None:
            raise ValueError("rtcons filtering needs a fitted reader backend")
        out = rtcons_filter(out, reader_backend, documents, tokenizer,
                            reader_cfg, report=report if report is not None else None)
    return out
