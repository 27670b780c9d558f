"""Analysis reports over score dumps and selection sets.

Score curves: per iteration, candidates sorted by raw score and min-max
rescaled to [0,1] over the dump, ready for plotting. Selection statistics:
token-length means per tokenizer, unique-context counts, training-instance
counts, and the pairwise overlap matrix across strategies.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from alqa.corpus import Document, QASample, Tokenizer
from alqa.generator import GenInputLayout, build_training_pairs
from alqa.reader import ReaderTrainConfig, build_features

log = logging.getLogger(__name__)


def load_score_dump(path: str | Path) -> list[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def report_scores(score_dumps, out_csv: str | Path | None = None) -> list[dict]:
    """Plot-ready score curves: {iteration, rank_fraction, rescaled_score}.

    One curve per iteration found in the dumps; scores are min-max rescaled
    over each dump; a constant dump rescales to all zeros with a warning.
    """
    if not score_dumps:
        raise ValueError("need at least one score dump")
    rows = []
    for dump in score_dumps:
        records = load_score_dump(dump) if not isinstance(dump, list) else dump
        if not records:
            continue
        lo = min(r["raw_score"] for r in records)
        hi = max(r["raw_score"] for r in records)
        if hi == lo:
            log.warning("constant scores in dump %s; rescaling to zeros", dump)
        by_iter: dict[int, list] = {}
        for r in records:
            by_iter.setdefault(int(r.get("iteration", 0)), []).append(r)
        for iteration, group in sorted(by_iter.items()):
            ordered = sorted(group, key=lambda r: (r["raw_score"], r["candidate_id"]))
            n = len(ordered)
            for i, r in enumerate(ordered):
                rescaled = 0.0 if hi == lo else (r["raw_score"] - lo) / (hi - lo)
                rows.append({
                    "iteration": iteration,
                    "rank_fraction": i / (n - 1) if n > 1 else 0.0,
                    "rescaled_score": rescaled,
                })
    if out_csv is not None:
        with Path(out_csv).open("w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["iteration", "rank_fraction", "rescaled_score"])
            writer.writeheader()
            writer.writerows(rows)
    return rows


def report_sample_stats(
    selections: dict[str, list[QASample]],
    documents: dict[str, Document],
    tokenizers: dict[str, Tokenizer],
    layout: GenInputLayout | None = None,
    reader_cfg: ReaderTrainConfig | None = None,
) -> dict:
    """Per-strategy selection statistics plus the pairwise overlap matrix.

    instances counts the training items a selection expands into: reader
    chunks carrying the answer and generator training pairs. The overlap
    matrix diagonal equals each selection's size.
    """
    stats: dict[str, dict] = {}
    for strategy, samples in selections.items():
        entry = {
            "samples": len(samples),
            "unique_contexts": len({s.document_id for s in samples}),
            "mean_context_tokens": {},
            "mean_question_tokens": {},
        }
        for name, tok in tokenizers.items():
            ctx_lengths = [tok.count(documents[s.document_id].text) for s in samples]
            q_lengths = [tok.count(s.question) for s in samples]
            entry["mean_context_tokens"][name] = (
                sum(ctx_lengths) / len(ctx_lengths) if ctx_lengths else 0.0)
            entry["mean_question_tokens"][name] = (
                sum(q_lengths) / len(q_lengths) if q_lengths else 0.0)
        if layout is not None and reader_cfg is not None and tokenizers:
            tok = next(iter(tokenizers.values()))
            gen_instances = sum(
                len(build_training_pairs(s, documents[s.document_id], layout, tok))
                for s in samples)
            reader_instances = len(build_features(
                samples, documents, tok, reader_cfg))
            entry["instances"] = {"reader": reader_instances,
                                  "generator": gen_instances}
        stats[strategy] = entry

    names = sorted(selections)
    overlap = {a: {b: len({s.id for s in selections[a]} &
                          {s.id for s in selections[b]})
                   for b in names} for a in names}
    return {"per_strategy": stats, "overlap": overlap}


def write_overlap_csv(report: dict, out_csv: str | Path) -> None:
    names = sorted(report["overlap"])
    with Path(out_csv).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", *names])
        for a in names:
            writer.writerow([a, *(report["overlap"][a][b] for b in names)])
