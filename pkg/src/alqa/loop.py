"""Iterative select -> annotate -> re-initialize -> fine-tune orchestration.

Each iteration scores the remaining pool with the configured strategy,
selects the top batch for annotation, moves it into the labeled set, resets
the model to its base checkpoint and fine-tunes on everything labeled so
far. The generator placement finishes with corpus synthesis, filtering and
staged reader training (synthetic first, then the collected annotations).
"""

from __future__ import annotations

import json
import logging
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

from alqa.acquisition import (
    DropoutEnsembleConfig,
    STRATEGIES,
    rank_and_select,
    score_candidates,
)
from alqa.backends.base import states_equal
from alqa.corpus import Document, QASample, Tokenizer
from alqa.generator import GenInputLayout, GenTrainConfig, build_training_pairs, train_generator
from alqa.reader import ReaderTrainConfig, evaluate, train_reader
from alqa.synthesis import SynthesisConfig, apply_filters, synthesize_corpus

log = logging.getLogger(__name__)

AL_PLACEMENTS = ("al_on_generator", "al_on_reader_after_source",
                 "al_on_reader_after_synthetic")
BASELINE_PLACEMENTS = ("random_baseline", "target_only_baseline",
                       "source_plus_target_baseline")


class PoolStateError(ValueError):
    pass


class AnnotationPending(RuntimeError):
    """Raised by live annotators when labels are not ready; the loop
    checkpoints a resumable state and suspends."""

    def __init__(self, batch_id: str):
        super().__init__(f"batch {batch_id} awaiting labels")
        self.batch_id = batch_id


@dataclass
class PoolState:
    labeled: set = field(default_factory=set)
    pool: set = field(default_factory=set)
    iteration: int = 0
    history: list = field(default_factory=list)

    def validate(self) -> None:
        overlap = self.labeled & self.pool
        if overlap:
            raise PoolStateError(f"labeled and pool overlap: {sorted(overlap)[:5]}")

    def apply_selection(self, selected, strategy: str) -> None:
        selected = list(selected)
        sel_set = set(selected)
        if len(sel_set) != len(selected):
            raise PoolStateError("duplicate ids in selection")
        missing = sel_set - self.pool
        if missing:
            raise PoolStateError(f"selection outside pool: {sorted(missing)[:5]}")
        before = len(self.labeled)
        self.labeled |= sel_set
        self.pool -= sel_set
        self.iteration += 1
        self.history.append((self.iteration, tuple(sorted(sel_set)), strategy))
        assert len(self.labeled) == before + len(sel_set)
        self.validate()

    def to_dict(self) -> dict:
        return {"labeled": sorted(self.labeled), "pool": sorted(self.pool),
                "iteration": self.iteration,
                "history": [[it, list(ids), strat]
                            for it, ids, strat in self.history]}

    @classmethod
    def from_dict(cls, d: dict) -> "PoolState":
        return cls(labeled=set(d["labeled"]), pool=set(d["pool"]),
                   iteration=d["iteration"],
                   history=[(it, tuple(ids), strat)
                            for it, ids, strat in d["history"]])


def subsample_pool(pool, k: int, seed: int) -> set:
    """Uniform subsample without replacement, deterministic per seed."""
    items = sorted(pool)
    if k > len(items):
        raise ValueError(f"cannot draw {k} from a pool of {len(items)}")
    return set(random.Random(seed).sample(items, k))


# ---------------------------------------------------------------------------
# Annotators
# ---------------------------------------------------------------------------

@dataclass
class AnnotationRequest:
    candidate_id: str
    context: str
    seed_question: str | None = None
    document_id: str | None = None
    domain: str = ""


class Annotator(ABC):
    @abstractmethod
    def request(self, candidates: list[AnnotationRequest],
                batch_key: str | None = None) -> list[QASample]:
        """Returns annotations covering exactly the requested candidates."""


class OracleAnnotator(Annotator):
    """Simulated domain expert: looks up held-back gold labels.

    gold maps candidate id -> QASample or list of QASamples (a context
    candidate may carry several gold pairs).
    """

    def __init__(self, gold: dict):
        self.gold = gold

    def request(self, candidates, batch_key=None):
        out = []
        for req in candidates:
            if req.candidate_id not in self.gold:
                raise KeyError(f"no gold label for candidate {req.candidate_id}")
            entry = self.gold[req.candidate_id]
            out.extend(entry if isinstance(entry, list) else [entry])
        return out


# ---------------------------------------------------------------------------
# Recipes and experiment context
# ---------------------------------------------------------------------------

@dataclass
class RecipeConfig:
    placement: str = "al_on_generator"
    iterations: int = 4
    batch_size: int = 50
    strategy: str = "random"
    filter_mode: str = "lm"
    seed: int = 0
    eval_each_iteration: bool = True

    def __post_init__(self):
        if self.placement not in AL_PLACEMENTS + BASELINE_PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.iterations < 1 or self.batch_size < 0:
            raise ValueError("iterations must be >= 1 and batch size >= 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "placement", "iterations", "batch_size", "strategy",
            "filter_mode", "seed", "eval_each_iteration")}


@dataclass
class ExperimentContext:
    """Everything an experiment needs besides the backends: data, tokenizer,
    layout and per-module configurations."""

    documents: dict[str, Document]
    candidates: dict[str, QASample]
    dev_samples: list[QASample]
    tokenizer: Tokenizer
    layout: GenInputLayout = field(default_factory=GenInputLayout)
    gen_cfg: GenTrainConfig = field(default_factory=GenTrainConfig)
    reader_cfg: ReaderTrainConfig = field(default_factory=ReaderTrainConfig)
    synth_cfg: SynthesisConfig = field(default_factory=SynthesisConfig)
    ens_cfg: DropoutEnsembleConfig = field(default_factory=DropoutEnsembleConfig)
    synthesis_documents: list = field(default_factory=list)
    reader_source_state: object = None
    reader_synthetic_state: object = None
    test_samples: list = field(default_factory=list)

    def gen_dev_pairs(self):
        pairs = []
        for sample in self.dev_samples:
            pairs.extend(build_training_pairs(
                sample, self.documents[sample.document_id], self.layout,
                self.tokenizer))
        return pairs


# ---------------------------------------------------------------------------
# Experiment record
# ---------------------------------------------------------------------------

class ExperimentRecord:
    """Directory-backed, replayable record of one experiment."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        (self.directory / "scores").mkdir(parents=True, exist_ok=True)
        (self.directory / "checkpoints").mkdir(exist_ok=True)
        self.suspended = False

    def write_config(self, config: dict) -> None:
        (self.directory / "config.json").write_text(json.dumps(config, indent=2))

    def write_poolstate(self, iteration: int, state: PoolState) -> None:
        path = self.directory / f"poolstate_iter{iteration:02d}.json"
        path.write_text(json.dumps(state.to_dict(), indent=2))

    def read_poolstate(self, iteration: int) -> PoolState:
        path = self.directory / f"poolstate_iter{iteration:02d}.json"
        return PoolState.from_dict(json.loads(path.read_text()))

    def write_scores(self, iteration: int, scores) -> None:
        path = self.directory / "scores" / f"iter{iteration:02d}.jsonl"
        with path.open("w") as fh:
            for s in scores:
                fh.write(json.dumps(s.to_dict()) + "\n")

    def score_dumps(self) -> list[Path]:
        return sorted((self.directory / "scores").glob("iter*.jsonl"))

    def append_log(self, event: dict) -> None:
        with (self.directory / "log.jsonl").open("a") as fh:
            fh.write(json.dumps(event) + "\n")

    def read_log(self) -> list[dict]:
        path = self.directory / "log.jsonl"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line]

    def write_metrics(self, metrics: dict) -> None:
        (self.directory / "metrics.json").write_text(json.dumps(metrics, indent=2))

    def read_metrics(self) -> dict:
        return json.loads((self.directory / "metrics.json").read_text())

    def write_suspended(self, payload: dict) -> None:
        self.suspended = True
        (self.directory / "suspended.json").write_text(json.dumps(payload, indent=2))

    def read_suspended(self) -> dict | None:
        path = self.directory / "suspended.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def clear_suspended(self) -> None:
        self.suspended = False
        path = self.directory / "suspended.json"
        if path.exists():
            path.unlink()

    @property
    def checkpoints_dir(self) -> Path:
        return self.directory / "checkpoints"


# ---------------------------------------------------------------------------
# Active learning loop
# ---------------------------------------------------------------------------

def _annotation_requests(selected, ctx: ExperimentContext):
    out = []
    for cid in selected:
        sample = ctx.candidates[cid]
        out.append(AnnotationRequest(
            candidate_id=cid,
            context=ctx.documents[sample.document_id].text,
            seed_question=sample.question,
            document_id=sample.document_id,
            domain=sample.domain))
    return out


def _fine_tune_generator(gen, ctx, labeled_samples, seed):
    pairs = []
    for sample in labeled_samples:
        pairs.extend(build_training_pairs(
            sample, ctx.documents[sample.document_id], ctx.layout, ctx.tokenizer))
    dev_pairs = ctx.gen_dev_pairs()
    train_log = train_generator(gen, pairs, ctx.gen_cfg, dev_pairs,
                                epochs=ctx.gen_cfg.epochs_target, seed=seed)
    return train_log.best_dev_loss


def run_al(
    gen_backend_factory,
    reader_backend_factory,
    pools: PoolState,
    recipe: RecipeConfig,
    annotator: Annotator,
    ctx: ExperimentContext,
    out_dir: str | Path,
    resume: bool = False,
) -> ExperimentRecord:
    """Runs the iterative labeling loop for one placement and, for the
    generator placement, the closing synthesize -> filter -> staged reader
    training. Suspends resumably when a live annotator times out."""
    if recipe.placement not in AL_PLACEMENTS:
        raise ValueError(f"run_al needs an AL placement, got {recipe.placement!r}")
    record = ExperimentRecord(out_dir)
    gen = gen_backend_factory() if gen_backend_factory is not None else None
    reader = reader_backend_factory() if reader_backend_factory is not None else None

    start_iteration = 1
    labeled_batches: list[list[str]] = []
    if resume:
        suspended = record.read_suspended()
        if suspended is None:
            raise ValueError(f"nothing to resume in {out_dir}")
        pools = PoolState.from_dict(suspended["poolstate"])
        start_iteration = suspended["iteration"]
        labeled_batches = [list(b) for b in suspended["labeled_batches"]]
        record.clear_suspended()
    else:
        record.write_config({"recipe": recipe.to_dict(),
                             "ens": ctx.ens_cfg.to_dict(),
                             "synthesis": ctx.synth_cfg.to_dict(),
                             "pool_size": len(pools.pool)})
        if isinstance(annotator, OracleAnnotator):
            budget = recipe.iterations * recipe.batch_size
            if budget > len(pools.pool):
                raise PoolStateError(
                    f"label budget {budget} exceeds pool of {len(pools.pool)} "
                    "in oracle mode")

    pools.validate()
    reader_initial = reader.get_state() if reader is not None else None
    if recipe.placement == "al_on_generator":
        train_base = gen.get_state()
    elif recipe.placement == "al_on_reader_after_source":
        train_base = ctx.reader_source_state or reader.get_state()
        reader.set_state(train_base)
    else:
        train_base = ctx.reader_synthetic_state or reader.get_state()
        reader.set_state(train_base)

    # replayed annotations for already-labeled batches (idempotent on resume)
    labeled_samples: list[QASample] = []
    for k, batch in enumerate(labeled_batches, start=1):
        labeled_samples.extend(annotator.request(
            _annotation_requests(batch, ctx), batch_key=f"iter{k:02d}"))

    for it in range(start_iteration, recipe.iterations + 1):
        if not pools.pool:
            log.warning("pool exhausted at iteration %d; stopping early", it)
            record.append_log({"iteration": it, "event": "pool_exhausted"})
            break
        candidates = [ctx.candidates[cid] for cid in sorted(pools.pool)]
        scores = score_candidates(
            recipe.strategy, candidates, ctx.documents, ctx.tokenizer,
            gen_backend=gen, reader_backend=reader, layout=ctx.layout,
            reader_cfg=ctx.reader_cfg, ens_cfg=ctx.ens_cfg,
            iteration=it, seed=recipe.seed)
        record.write_scores(it, scores)
        selected = rank_and_select(scores, recipe.batch_size)

        try:
            annotations = annotator.request(
                _annotation_requests(selected, ctx),
                batch_key=f"iter{it:02d}")
        except AnnotationPending as pending:
            record.write_suspended({
                "iteration": it,
                "batch_id": pending.batch_id,
                "poolstate": pools.to_dict(),
                "labeled_batches": labeled_batches,
            })
            log.warning("suspended at iteration %d awaiting batch %s",
                        it, pending.batch_id)
            return record

        pools.apply_selection(selected, recipe.strategy)
        record.write_poolstate(it, pools)
        labeled_batches.append(list(selected))
        labeled_samples.extend(annotations)

        event = {"iteration": it, "selected": len(selected),
                 "labeled_total": len(pools.labeled)}
        if recipe.batch_size > 0:
            if recipe.placement == "al_on_generator":
                gen.set_state(train_base)
                event["reinit_identical"] = states_equal(gen.get_state(), train_base)
                event["gen_dev_loss"] = _fine_tune_generator(
                    gen, ctx, labeled_samples, recipe.seed + it)
            else:
                reader.set_state(train_base)
                event["reinit_identical"] = states_equal(reader.get_state(), train_base)
                train_reader(reader, labeled_samples, ctx.reader_cfg,
                             ctx.dev_samples if recipe.eval_each_iteration else [],
                             ctx.documents, ctx.tokenizer, seed=recipe.seed + it)
                if recipe.eval_each_iteration and ctx.dev_samples:
                    report = evaluate(reader, ctx.dev_samples, ctx.reader_cfg,
                                      ctx.documents, ctx.tokenizer)
                    event["dev_em"], event["dev_f1"] = report.em, report.f1
        record.append_log(event)

    metrics = {"labeled_total": len(pools.labeled),
               "iterations_run": pools.iteration}

    if recipe.placement == "al_on_generator":
        metrics.update(_final_generator_phase(
            gen, reader, reader_initial, ctx, recipe, labeled_samples))
    elif ctx.dev_samples and reader is not None:
        report = evaluate(reader, ctx.dev_samples, ctx.reader_cfg,
                          ctx.documents, ctx.tokenizer)
        metrics["dev_em"], metrics["dev_f1"] = report.em, report.f1

    if gen is not None:
        gen.save(record.checkpoints_dir / "generator")
    if reader is not None:
        reader.save(record.checkpoints_dir / "reader")
    if hasattr(ctx.tokenizer, "save"):
        ctx.tokenizer.save(record.checkpoints_dir / "tokenizer.json")
    record.write_metrics(metrics)
    return record


def _final_generator_phase(gen, reader, reader_initial, ctx, recipe,
                           labeled_samples):
    """Synthesize target-domain data with the AL-fine-tuned generator,
    filter, then train the reader on filtered synthetic data and fine-tune
    on the collected annotations. The final reader sees no target-domain
    supervision beyond those two sets."""
    synth_docs = ctx.synthesis_documents or list(ctx.documents.values())
    synth_cfg = ctx.synth_cfg
    synthetic, synth_report = synthesize_corpus(
        gen, synth_docs, synth_cfg, ctx.layout, ctx.tokenizer,
        base_seed=recipe.seed)

    docs = dict(ctx.documents)
    for d in synth_docs:
        docs.setdefault(d.id, d)

    rt_reader = None
    if recipe.filter_mode in ("rtcons", "both") and reader is not None:
        # round-trip reader: source-fitted, then adapted on the collected
        # target annotations so it does not wipe out whole contexts
        reader.set_state(ctx.reader_source_state or reader_initial)
        if labeled_samples:
            train_reader(reader, labeled_samples, ctx.reader_cfg, [],
                         docs, ctx.tokenizer, seed=recipe.seed)
        rt_reader = reader

    filter_cfg = SynthesisConfig(**{**synth_cfg.to_dict(),
                                    "filter_mode": recipe.filter_mode})
    filter_report: dict = {}
    filtered = apply_filters(synthetic, filter_cfg, reader_backend=rt_reader,
                             documents=docs, tokenizer=ctx.tokenizer,
                             reader_cfg=ctx.reader_cfg, report=filter_report)

    metrics = {"synthesized": len(synthetic),
               "synthesis_report": synth_report.to_dict(),
               "filtered": len(filtered),
               "filter_report": filter_report,
               "annotated_used": len(labeled_samples)}

    if reader is not None and filtered:
        reader.set_state(reader_initial)  # pretrained start, no source data
        train_reader(reader, filtered, ctx.reader_cfg, ctx.dev_samples,
                     docs, ctx.tokenizer, seed=recipe.seed + 100)
        if labeled_samples:
            train_reader(reader, labeled_samples, ctx.reader_cfg,
                         ctx.dev_samples, docs, ctx.tokenizer,
                         seed=recipe.seed + 200)
        if ctx.dev_samples:
            report = evaluate(reader, ctx.dev_samples, ctx.reader_cfg, docs,
                              ctx.tokenizer)
            metrics["dev_em"], metrics["dev_f1"] = report.em, report.f1
        metrics["synthetic_contexts"] = len({s.document_id for s in filtered})
    return metrics


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def run_baseline(
    recipe: RecipeConfig,
    reader_backend_factory,
    ctx: ExperimentContext,
    out_dir: str | Path,
) -> ExperimentRecord:
    """target_only: train the reader on a seeded random subset of target
    annotations; source_plus_target: same, starting from the source-fitted
    checkpoint. The subset size is iterations x batch (200 by default)."""
    if recipe.placement not in BASELINE_PLACEMENTS:
        raise ValueError(f"run_baseline needs a baseline placement, "
                         f"got {recipe.placement!r}")
    record = ExperimentRecord(out_dir)
    record.write_config({"recipe": recipe.to_dict()})
    reader = reader_backend_factory()

    n_labels = recipe.iterations * recipe.batch_size
    chosen = subsample_pool(set(ctx.candidates), n_labels, recipe.seed)
    samples = [ctx.candidates[cid] for cid in sorted(chosen)]

    phases = []
    if recipe.placement == "source_plus_target_baseline":
        if ctx.reader_source_state is None:
            raise ValueError("source_plus_target baseline needs a "
                             "source-fitted reader state")
        reader.set_state(ctx.reader_source_state)
        phases.append({"phase": "source", "samples": "pretrained-state"})
    phases.append({"phase": "target", "samples": len(samples)})
    train_reader(reader, samples, ctx.reader_cfg, ctx.dev_samples,
                 ctx.documents, ctx.tokenizer, seed=recipe.seed)

    metrics = {"labeled_total": len(samples), "phases": phases,
               "subset_ids_hash": hash(tuple(sorted(chosen))) & 0xFFFFFFFF}
    if ctx.dev_samples:
        report = evaluate(reader, ctx.dev_samples, ctx.reader_cfg,
                          ctx.documents, ctx.tokenizer)
        metrics["dev_em"], metrics["dev_f1"] = report.em, report.f1
    record.write_metrics(metrics)
    record.append_log({"event": "baseline_complete", **metrics})
    return record
