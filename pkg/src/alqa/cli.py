"""Command-line surface binding every module: ingest, train, synthesize,
filter, score, run experiments, evaluate, report, serve.

Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime failure.
Each command writes its artifacts under the run directory plus a manifest
of inputs, outputs and seeds; concurrent invocations on one run directory
are rejected through a lock file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from alqa.backends.base import load_generation_backend, load_reader_backend
from alqa.backends.stub import StubGenerationBackend, StubReaderBackend
from alqa.corpus import (
    IngestError,
    WhitespaceTokenizer,
    exact_match,
    ingest_dataset,
    load_documents,
    load_samples,
    max_over_golds,
    sample_gold_answers,
    token_f1,
    write_documents,
    write_manifest,
    write_samples,
)
from alqa.generator import (
    DecodeConfig,
    build_training_pairs,
    save_generator_checkpoint,
    train_generator,
)
from alqa.loop import (
    ExperimentContext,
    OracleAnnotator,
    PoolState,
    run_al,
    run_baseline,
)
from alqa.reader import evaluate, save_reader_checkpoint, train_reader
from alqa.reports import report_sample_stats, report_scores, write_overlap_csv
from alqa.runconfig import ConfigError, RunConfig
from alqa.synthesis import (
    apply_filters,
    load_synthetic,
    synthesize_corpus,
    write_synthetic,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class DataError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

@contextmanager
def _run_lock(run_dir: Path):
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / ".lock"
    if lock.exists():
        raise RuntimeError(f"run directory {run_dir} is locked by another "
                           f"invocation (pid {lock.read_text().strip()})")
    lock.write_text(str(os.getpid()))
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _write_run_manifest(run_dir: Path, command: str, cfg: RunConfig | None,
                        inputs: list[Path], outputs: list[Path]) -> None:
    manifests = run_dir / "manifests"
    manifests.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config_hash": cfg.config_hash if cfg else None,
        "seed": cfg.seed if cfg else None,
        "inputs": {str(p): _hash_file(Path(p)) for p in inputs if Path(p).exists()},
        "outputs": [str(p) for p in outputs],
    }
    (manifests / f"{command}.json").write_text(json.dumps(payload, indent=2))


def _load_corpus(cfg: RunConfig, name: str, tokenizer):
    section = cfg.corpus(name)
    if "manifest" in section:
        result = ingest_dataset(cfg.resolve(section["manifest"]), "native_jsonl",
                                tokenizer, domain=section.get("domain"))
    elif "path" in section and "format" in section:
        result = ingest_dataset(cfg.resolve(section["path"]), section["format"],
                                tokenizer, domain=section.get("domain", name))
    else:
        raise ConfigError([f"corpora.{name}: needs manifest or path+format"])
    return result.documents, result.samples


def _fit_tokenizer(cfg: RunConfig, corpus_names) -> WhitespaceTokenizer:
    layout = cfg.layout()
    tokenizer = WhitespaceTokenizer(specials=layout.specials)
    for name in corpus_names:
        if name not in cfg.data.get("corpora", {}):
            continue
        docs, samples = _load_corpus(cfg, name, tokenizer)
        tokenizer.fit([d.text for d in docs])
        tokenizer.fit([s.question for s in samples])
    tokenizer.freeze()
    return tokenizer


def _dev_split(samples, fraction: float, seed: int):
    import random

    if not samples:
        return [], []
    items = sorted(samples, key=lambda s: s.id)
    random.Random(seed).shuffle(items)
    n_dev = max(1, int(len(items) * fraction))
    return items[n_dev:], items[:n_dev]


def _make_gen_backend(cfg: RunConfig, tokenizer, checkpoint: str | None):
    if checkpoint:
        return load_generation_backend(checkpoint)
    section = cfg.backend_section("generator")
    backend_id = section.pop("backend", "tiny-gen")
    section.pop("checkpoint", None)
    if backend_id == "stub-gen":
        return StubGenerationBackend(seed=section.get("seed", cfg.seed))
    if backend_id == "tiny-gen":
        from alqa.backends.tiny_gen import TinyGenBackend

        section.setdefault("vocab_size", len(tokenizer))
        return TinyGenBackend(**section)
    raise ConfigError([f"backends.generator.backend: unknown id {backend_id!r}"])


def _make_reader_backend(cfg: RunConfig, tokenizer, checkpoint: str | None):
    if checkpoint:
        return load_reader_backend(checkpoint)
    section = cfg.backend_section("reader")
    backend_id = section.pop("backend", "tiny-reader")
    section.pop("checkpoint", None)
    if backend_id == "stub-reader":
        return StubReaderBackend(seed=section.get("seed", cfg.seed))
    if backend_id == "tiny-reader":
        from alqa.backends.tiny_reader import TinyReaderBackend

        section.setdefault("vocab_size", len(tokenizer))
        return TinyReaderBackend(**section)
    raise ConfigError([f"backends.reader.backend: unknown id {backend_id!r}"])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    out = Path(args.out)
    with _run_lock(out):
        result = ingest_dataset(args.path, args.format, domain=args.domain)
        write_documents(result.documents, out / "documents.jsonl")
        write_samples(result.samples, out / "samples.jsonl")
        write_manifest(out / "manifest.json", out.name,
                       args.domain or Path(args.path).stem,
                       "documents.jsonl", "samples.jsonl", "whitespace",
                       result.counts)
        (out / "ingest_report.json").write_text(json.dumps({
            "counts": result.counts,
            "rejected": result.rejected[:100],
        }, indent=2))
        _write_run_manifest(out, "ingest", None, [Path(args.path)],
                            [out / "documents.jsonl", out / "samples.jsonl",
                             out / "manifest.json"])
    print(json.dumps(result.counts))
    return EXIT_OK


def cmd_train_gen(args) -> int:
    cfg = RunConfig.load(args.config)
    run_dir = cfg.output_dir
    with _run_lock(run_dir):
        tokenizer = _fit_tokenizer(cfg, ["source", "target"])
        layout = cfg.layout()
        corpus_name = args.corpus or ("source" if args.stage == "source" else "target")
        docs, samples = _load_corpus(cfg, corpus_name, tokenizer)
        docs_by_id = {d.id: d for d in docs}
        train, dev = _dev_split(samples, cfg.data.get("dev_fraction", 0.1),
                                cfg.seed)
        pairs, dev_pairs = [], []
        for bucket, out_pairs in ((train, pairs), (dev, dev_pairs)):
            for s in bucket:
                out_pairs.extend(build_training_pairs(
                    s, docs_by_id[s.document_id], layout, tokenizer))
        if not pairs or not dev_pairs:
            raise DataError(f"corpus {corpus_name} yields no usable training pairs")

        backend = _make_gen_backend(cfg, tokenizer, args.init)
        gen_cfg = cfg.gen_train()
        epochs = gen_cfg.epochs_source if args.stage == "source" else gen_cfg.epochs_target
        train_log = train_generator(backend, pairs, gen_cfg, dev_pairs,
                                    epochs=epochs, seed=cfg.seed)
        ckpt = run_dir / "checkpoints" / (args.out or f"gen-{args.stage}")
        save_generator_checkpoint(ckpt, backend, tokenizer, layout, gen_cfg,
                                  train_log)
        _write_run_manifest(run_dir, f"train-gen-{args.stage}", cfg, [], [ckpt])
    print(json.dumps({"checkpoint": str(ckpt),
                      "best_epoch": train_log.best_epoch,
                      "best_dev_loss": train_log.best_dev_loss}))
    return EXIT_OK


def cmd_train_reader(args) -> int:
    cfg = RunConfig.load(args.config)
    run_dir = cfg.output_dir
    with _run_lock(run_dir):
        tokenizer = _fit_tokenizer(cfg, ["source", "target"])
        reader_cfg = cfg.reader_train()
        corpus_name = args.corpus or "target"
        docs, samples = _load_corpus(cfg, corpus_name, tokenizer)
        docs_by_id = {d.id: d for d in docs}
        if args.synthetic:
            train = load_synthetic(args.synthetic)
            _, dev = _dev_split(samples, cfg.data.get("dev_fraction", 0.1),
                                cfg.seed)
        else:
            train, dev = _dev_split(samples, cfg.data.get("dev_fraction", 0.1),
                                    cfg.seed)
        if not train:
            raise DataError("no reader training samples")
        backend = _make_reader_backend(cfg, tokenizer, args.init)
        train_log = train_reader(backend, train, reader_cfg, dev, docs_by_id,
                                 tokenizer, seed=cfg.seed)
        ckpt = run_dir / "checkpoints" / (args.out or "reader")
        save_reader_checkpoint(ckpt, backend, tokenizer, reader_cfg, train_log)
        _write_run_manifest(run_dir, "train-reader", cfg, [], [ckpt])
    print(json.dumps({"checkpoint": str(ckpt),
                      "best_dev_f1": train_log["best_dev_f1"]}))
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = RunConfig.load(args.config)
    run_dir = cfg.output_dir
    with _run_lock(run_dir):
        backend = load_generation_backend(args.checkpoint)
        tokenizer = WhitespaceTokenizer.load(Path(args.checkpoint) / "tokenizer.json")
        layout = cfg.layout()
        docs, _ = _load_corpus(cfg, args.corpus or "target", tokenizer)
        synth_cfg = cfg.synthesis()
        decode = DecodeConfig(**cfg.decode_kwargs())
        samples, report = synthesize_corpus(backend, docs, synth_cfg, layout,
                                            tokenizer, base_seed=cfg.seed,
                                            decode_cfg=decode)
        out = Path(args.out) if args.out else run_dir / "synthetic.jsonl"
        write_synthetic(samples, out)
        report_path = out.with_suffix(".report.json")
        report_path.write_text(json.dumps(report.to_dict(), indent=2))
        _write_run_manifest(run_dir, "synthesize", cfg,
                            [Path(args.checkpoint) / "backend.json"],
                            [out, report_path])
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def cmd_filter(args) -> int:
    cfg = RunConfig.load(args.config)
    run_dir = cfg.output_dir
    with _run_lock(run_dir):
        samples = load_synthetic(args.input)
        synth_cfg = cfg.synthesis()
        if args.mode:
            synth_cfg = type(synth_cfg)(**{**synth_cfg.to_dict(),
                                           "filter_mode": args.mode})
        reader = None
        tokenizer = None
        documents = None
        if synth_cfg.filter_mode in ("rtcons", "both"):
            if not args.reader_checkpoint:
                raise ConfigError(["filter: rtcons mode needs --reader-checkpoint"])
            reader = load_reader_backend(args.reader_checkpoint)
            tokenizer = WhitespaceTokenizer.load(
                Path(args.reader_checkpoint) / "tokenizer.json")
            docs, _ = _load_corpus(cfg, args.corpus or "target", tokenizer)
            documents = {d.id: d for d in docs}
        report: dict = {}
        kept = apply_filters(samples, synth_cfg, reader_backend=reader,
                             documents=documents, tokenizer=tokenizer,
                             reader_cfg=cfg.reader_train(), report=report)
        out = Path(args.out) if args.out else run_dir / "filtered.jsonl"
        write_synthetic(kept, out)
        _write_run_manifest(run_dir, "filter", cfg, [Path(args.input)], [out])
    print(json.dumps({"input": len(samples), "kept": len(kept), **report}))
    return EXIT_OK


def _build_context(cfg: RunConfig, tokenizer, docs, samples, dev,
                   reader_source_state=None) -> ExperimentContext:
    return ExperimentContext(
        documents={d.id: d for d in docs},
        candidates={s.id: s for s in samples},
        dev_samples=dev,
        tokenizer=tokenizer,
        layout=cfg.layout(),
        gen_cfg=cfg.gen_train(),
        reader_cfg=cfg.reader_train(),
        synth_cfg=cfg.synthesis(),
        ens_cfg=cfg.ensemble(),
        synthesis_documents=docs,
        reader_source_state=reader_source_state,
    )


def cmd_al_run(args) -> int:
    cfg = RunConfig.load(args.config)
    run_dir = cfg.output_dir
    with _run_lock(run_dir):
        if args.gen_checkpoint:
            tokenizer = WhitespaceTokenizer.load(
                Path(args.gen_checkpoint) / "tokenizer.json")
        else:
            tokenizer = _fit_tokenizer(cfg, ["source", "target"])
        docs, samples = _load_corpus(cfg, "target", tokenizer)
        pool_samples, dev = _dev_split(samples,
                                       cfg.data.get("dev_fraction", 0.1),
                                       cfg.seed)
        gen = _make_gen_backend(cfg, tokenizer, args.gen_checkpoint)
        reader = _make_reader_backend(cfg, tokenizer, args.reader_checkpoint)
        ctx = _build_context(cfg, tokenizer, docs, pool_samples, dev,
                             reader_source_state=reader.get_state())
        recipe = cfg.recipe()
        if args.live_url:
            from alqa.service import LiveAnnotator

            annotator = LiveAnnotator(base_url=args.live_url,
                                      poll_interval=args.poll_interval,
                                      timeout=args.timeout)
        else:
            annotator = OracleAnnotator(dict(ctx.candidates))
        pools = PoolState(pool=set(ctx.candidates))
        record = run_al(lambda: gen, lambda: reader, pools, recipe, annotator,
                        ctx, run_dir / "experiment", resume=args.resume)
        _write_run_manifest(run_dir, "al-run", cfg, [],
                            [record.directory])
    if record.suspended:
        print(json.dumps({"suspended": True,
                          "record": str(record.directory)}))
        return EXIT_OK
    print(json.dumps({"record": str(record.directory),
                      **record.read_metrics()}))
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = RunConfig.load(args.config)
    run_dir = cfg.output_dir
    with _run_lock(run_dir):
        tokenizer = _fit_tokenizer(cfg, ["source", "target"])
        docs, samples = _load_corpus(cfg, "target", tokenizer)
        pool_samples, dev = _dev_split(samples,
                                       cfg.data.get("dev_fraction", 0.1),
                                       cfg.seed)
        reader = _make_reader_backend(cfg, tokenizer, args.reader_checkpoint)
        source_state = reader.get_state() if args.reader_checkpoint else None
        ctx = _build_context(cfg, tokenizer, docs, pool_samples, dev,
                             reader_source_state=source_state)
        recipe = cfg.recipe()
        recipe = type(recipe)(**{**recipe.to_dict(), "placement": args.placement})
        record = run_baseline(recipe, lambda: reader, ctx,
                              run_dir / "baseline")
        _write_run_manifest(run_dir, "baseline", cfg, [], [record.directory])
    print(json.dumps(record.read_metrics()))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = RunConfig.load(args.config)
    tokenizer = _fit_tokenizer(cfg, [args.corpus or "target"])
    docs, samples = _load_corpus(cfg, args.corpus or "target", tokenizer)
    docs_by_id = {d.id: d for d in docs}
    if args.predictions:
        preds = json.loads(Path(args.predictions).read_text())
        em_total, f1_total, n = 0.0, 0.0, 0
        for sample in samples:
            if sample.id not in preds:
                continue
            golds = sample_gold_answers(sample)
            em_total += max_over_golds(exact_match, preds[sample.id], golds)
            f1_total += max_over_golds(token_f1, preds[sample.id], golds)
            n += 1
        if n == 0:
            raise DataError("no predictions matched any gold sample id")
        result = {"em": em_total / n, "f1": f1_total / n, "n": n}
    elif args.reader_checkpoint:
        reader = load_reader_backend(args.reader_checkpoint)
        tokenizer = WhitespaceTokenizer.load(
            Path(args.reader_checkpoint) / "tokenizer.json")
        docs, samples = _load_corpus(cfg, args.corpus or "target", tokenizer)
        report = evaluate(reader, samples, cfg.reader_train(),
                          {d.id: d for d in docs}, tokenizer)
        result = report.to_dict(with_per_sample=False)
        if args.out:
            Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
    else:
        raise ConfigError(["evaluate: needs --predictions or --reader-checkpoint"])
    print(json.dumps(result))
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else None
    if args.kind == "scores":
        rows = report_scores(args.dumps, out_csv=args.out)
        print(json.dumps({"rows": len(rows), "csv": args.out}))
        return EXIT_OK
    # selection statistics over one or more experiment records
    if not cfg:
        raise ConfigError(["report stats: needs --config for corpus access"])
    tokenizer = _fit_tokenizer(cfg, ["source", "target"])
    docs, samples = _load_corpus(cfg, "target", tokenizer)
    by_id = {s.id: s for s in samples}
    selections = {}
    for exp_dir in args.experiments:
        exp = Path(exp_dir)
        config = json.loads((exp / "config.json").read_text())
        strategy = config["recipe"]["strategy"]
        states = sorted(exp.glob("poolstate_iter*.json"))
        if not states:
            raise DataError(f"{exp}: no poolstate files")
        final = json.loads(states[-1].read_text())
        selections[strategy] = [by_id[cid] for cid in final["labeled"]
                                if cid in by_id]
    report = report_sample_stats(selections, {d.id: d for d in docs},
                                 {"whitespace": tokenizer},
                                 layout=cfg.layout(),
                                 reader_cfg=cfg.reader_train())
    out = Path(args.out) if args.out else cfg.output_dir / "sample_stats.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2))
    write_overlap_csv(report, out.with_suffix(".overlap.csv"))
    print(json.dumps({"strategies": sorted(selections), "out": str(out)}))
    return EXIT_OK


def cmd_serve(args) -> int:
    from alqa.service import serve

    serve(args.store, host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alqa",
        description="Synthetic QA generation with active learning for "
                    "low-resource extractive reading")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a dataset into the native corpus format")
    p.add_argument("--path", required=True)
    p.add_argument("--format", required=True,
                   choices=["mrqa_jsonl", "squad_json", "native_jsonl"])
    p.add_argument("--domain")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-gen", help="train the QA-pair generator")
    p.add_argument("--config", required=True)
    p.add_argument("--stage", choices=["source", "target"], default="source")
    p.add_argument("--corpus")
    p.add_argument("--init", help="checkpoint to fine-tune from")
    p.add_argument("--out", help="checkpoint name")
    p.set_defaults(func=cmd_train_gen)

    p = sub.add_parser("train-reader", help="train the span-extraction reader")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus")
    p.add_argument("--synthetic", help="train on a synthetic-sample JSONL")
    p.add_argument("--init")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_reader)

    p = sub.add_parser("synthesize", help="generate synthetic QA pairs")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("filter", help="filter a synthetic corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=["lm", "rtcons", "both", "none"])
    p.add_argument("--reader-checkpoint")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("score", help="score the unlabeled pool with one strategy")
    p.add_argument("--config", required=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--gen-checkpoint")
    p.add_argument("--reader-checkpoint")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("al-run", help="run an active-learning experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--gen-checkpoint")
    p.add_argument("--reader-checkpoint")
    p.add_argument("--live-url", help="annotation service URL (live mode)")
    p.add_argument("--poll-interval", type=float, default=2.0)
    p.add_argument("--timeout", type=float)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_al_run)

    p = sub.add_parser("baseline", help="run a non-AL baseline recipe")
    p.add_argument("--config", required=True)
    p.add_argument("--placement", default="target_only_baseline",
                   choices=["target_only_baseline",
                            "source_plus_target_baseline", "random_baseline"])
    p.add_argument("--reader-checkpoint")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="EM/F1 evaluation")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus")
    p.add_argument("--predictions", help="JSON {sample_id: prediction}")
    p.add_argument("--reader-checkpoint")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="score-distribution and selection reports")
    p.add_argument("kind", choices=["scores", "stats"])
    p.add_argument("--config")
    p.add_argument("--dumps", nargs="*", default=[])
    p.add_argument("--experiments", nargs="*", default=[])
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--store")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_score(args) -> int:
    cfg = RunConfig.load(args.config)
    run_dir = cfg.output_dir
    from alqa.acquisition import score_candidates

    with _run_lock(run_dir):
        if args.gen_checkpoint:
            tokenizer = WhitespaceTokenizer.load(
                Path(args.gen_checkpoint) / "tokenizer.json")
        else:
            tokenizer = _fit_tokenizer(cfg, ["source", "target"])
        docs, samples = _load_corpus(cfg, "target", tokenizer)
        gen = _make_gen_backend(cfg, tokenizer, args.gen_checkpoint)
        reader = _make_reader_backend(cfg, tokenizer, args.reader_checkpoint)
        scores = score_candidates(
            args.strategy, samples, {d.id: d for d in docs}, tokenizer,
            gen_backend=gen, reader_backend=reader, layout=cfg.layout(),
            reader_cfg=cfg.reader_train(), ens_cfg=cfg.ensemble(),
            iteration=0, seed=cfg.seed)
        out = Path(args.out) if args.out else run_dir / f"scores-{args.strategy}.jsonl"
        with out.open("w") as fh:
            for s in scores:
                fh.write(json.dumps(s.to_dict()) + "\n")
        _write_run_manifest(run_dir, f"score-{args.strategy}", cfg, [], [out])
    print(json.dumps({"scored": len(scores), "out": str(out)}))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
