"""Acceptance suite: one test per acceptance criterion, each printing a
PASS line with its runtime. Tolerances are pinned here and nowhere else.
"""

import math
import time

import numpy as np
import pytest

from alqa.acquisition import (
    DropoutEnsembleConfig,
    bald_from_distributions,
    combine_dsp_rt,
    lexical_similarity,
    make_score,
    rank_and_select,
    score_dsp,
    score_ls,
    score_sp,
)
from alqa.backends.stub import StubGenerationBackend, StubReaderBackend
from alqa.corpus import (
    Document,
    QASample,
    WhitespaceTokenizer,
    exact_match,
    max_over_golds,
    token_f1,
)
from alqa.generator import GenInputLayout
from alqa.loop import (
    ExperimentContext,
    OracleAnnotator,
    PoolState,
    RecipeConfig,
    run_al,
    subsample_pool,
)
from alqa.reader import ReaderTrainConfig, evaluate, predict, train_reader
from alqa.reports import report_sample_stats
from alqa.synthesis import (
    SynthesisConfig,
    SyntheticSample,
    lm_score_filter,
    rtcons_filter,
    synthesize_corpus,
)

TOL = 1e-9


def _report(name, started, budget):
    elapsed = time.monotonic() - started
    assert elapsed < budget, f"{name} exceeded its {budget}s budget ({elapsed:.1f}s)"
    print(f"[acceptance] {name}: PASS ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# Criterion 1: scoring-formula oracle suite (< 10 s)
# ---------------------------------------------------------------------------

class _FormulaGen(StubGenerationBackend):
    """Fixed question/answer decode with scripted per-pass step log-probs."""

    def __init__(self, tok, layout, answer_word, pass_steps):
        super().__init__()
        self.qo, self.qc, self.ao, self.ac = (
            tok.token_to_id(t) for t in layout.specials)
        self.q_ids = [tok.add_token("which"), tok.add_token("?")]
        self.a_ids = [tok.add_token(answer_word)]
        self.pass_steps = pass_steps
        self.calls = 0

    def beam_decode(self, source, bos_token, eos_token, beam_size, max_len):
        if bos_token == self.qo:
            return self.q_ids + [eos_token]
        return self.a_ids + [eos_token]

    def sequence_logprobs(self, source, target):
        if self.stochastic:
            steps = self.pass_steps[self.calls % len(self.pass_steps)]
            self.calls += 1
        else:
            steps = self.pass_steps[0]
        return list(steps)[:len(target) - 1]


def test_scoring_formula_oracles():
    started = time.monotonic()
    layout = GenInputLayout(max_source_tokens=24, max_question_tokens=8,
                            max_total_tokens=40, chunk_stride=8,
                            max_answer_tokens=4)
    tok = WhitespaceTokenizer(specials=layout.specials)
    context = "alpha beta gamma"
    tok.encode(context)

    # SP: mean of per-step answer log-probs (steps include the end token)
    backend = _FormulaGen(tok, layout, "beta", [[-0.1, -0.3]])
    assert score_sp(backend, tok, layout, context).raw == pytest.approx(-0.2, abs=TOL)

    # D-SP(N=1, dropout off) == SP
    backend = _FormulaGen(tok, layout, "beta", [[-0.37, -0.11]])
    sp = score_sp(backend, tok, layout, context).raw
    dsp = score_dsp(backend, tok, layout, context,
                    DropoutEnsembleConfig(passes=1, stochastic=False)).raw
    assert dsp == pytest.approx(sp, abs=TOL)

    # D-SP averages pass scores: passes at -0.2 and -0.4 give -0.3
    backend = _FormulaGen(tok, layout, "beta",
                          [[-0.2, -0.2], [-0.4, -0.4]])
    dsp = score_dsp(backend, tok, layout, context,
                    DropoutEnsembleConfig(passes=2, stochastic=True)).raw
    assert dsp == pytest.approx(-0.3, abs=TOL)

    # LS: identical decodes pin the metric's self-similarity; the closed
    # form for a 5-token answer is 1 - 0.5 * (1/5)^3
    class _ConstAnswerGen(_FormulaGen):
        def beam_decode(self, source, bos_token, eos_token, beam_size, max_len):
            if bos_token == self.qo:
                return self.q_ids + [eos_token]
            return [tok.add_token(w) for w in
                    ("one", "two", "three", "four", "five")] + [eos_token]

    tok.encode("one two three four five")
    ls = score_ls(_ConstAnswerGen(tok, layout, "one", [[-0.1]]), tok, layout,
                  "one two three four five",
                  DropoutEnsembleConfig(passes=3, stochastic=True)).raw
    assert ls == pytest.approx(1 - 0.5 * (1 / 5) ** 3, abs=TOL)
    assert lexical_similarity("a b", "x y") == 0.0

    # Eq. 6 rescaling: D-SP of 0 maps to 1.0, so the combined score is 1+RT
    assert combine_dsp_rt(0.0, 0.5) == pytest.approx(1.5, abs=TOL)
    assert combine_dsp_rt(-0.25, 0.5) == pytest.approx(math.exp(-2.0) + 0.5, abs=TOL)

    # BALD: identical passes carry zero information; opposing point masses
    # yield the entropy of the mean, ln 2
    assert bald_from_distributions([[0.3, 0.7]] * 4) == pytest.approx(0.0, abs=TOL)
    assert bald_from_distributions([[1.0, 0.0], [0.0, 1.0]]) == pytest.approx(
        math.log(2), abs=TOL)

    _report("scoring-formula oracle suite", started, budget=10)


# ---------------------------------------------------------------------------
# Criterion 2: selection orientation on 1000 random score sets (< 10 s)
# ---------------------------------------------------------------------------

def _brute_force_designated(strategy, raws_by_id, n):
    """Independent sorter: the paper designates least-confident candidates
    (lowest raw score) for the generator-side strategies and the highest
    mutual information for the reader-side one."""
    reverse = strategy in ("bald", "random")
    ordered = sorted(raws_by_id,
                     key=lambda cid: (-raws_by_id[cid] if reverse
                                      else raws_by_id[cid], cid))
    return ordered[:n]


def test_selection_orientation_against_brute_force():
    started = time.monotonic()
    rng = np.random.default_rng(2024)
    strategies = ("sp", "dsp", "ls", "rt", "dsp_rt", "bald", "random")
    for trial in range(1000):
        strategy = strategies[trial % len(strategies)]
        size = int(rng.integers(3, 40))
        n = int(rng.integers(1, size + 1))
        scores = []
        raws_by_id = {}
        for i in range(size):
            cid = f"c{i:03d}"
            raw = float(np.round(rng.uniform(-3, 3), 3))
            score = make_score(cid, strategy, raw, iteration=1, seed=trial)
            scores.append(score)
            raws_by_id[cid] = score.raw_score if strategy == "random" else raw
        got = rank_and_select(scores, n)
        want = _brute_force_designated(strategy, raws_by_id, n)
        assert got == want, f"strategy {strategy} trial {trial}"
    _report("selection-orientation suite (1000 sets)", started, budget=10)


# ---------------------------------------------------------------------------
# Criterion 3: Algorithm bookkeeping at scale (< 1 min)
# ---------------------------------------------------------------------------

def _bookkeeping_world(n=10000):
    layout = GenInputLayout(max_source_tokens=16, max_question_tokens=8,
                            max_total_tokens=32, chunk_stride=4,
                            max_answer_tokens=4)
    tok = WhitespaceTokenizer(specials=layout.specials)
    documents, candidates = {}, {}
    for i in range(n):
        text = f"entry {i} holds value{i} here"
        doc = Document.build(f"d{i:05d}", text, "pool", tok)
        documents[doc.id] = doc
        start = text.index(f"value{i}")
        candidates[f"s{i:05d}"] = QASample(
            id=f"s{i:05d}", document_id=doc.id, question=f"what does entry {i} hold ?",
            answer_text=f"value{i}",
            answer_char_span=(start, start + len(f"value{i}")),
            provenance="oracle", domain="pool")
    tok.fit([d.text for d in documents.values()])
    tok.freeze()
    return layout, tok, documents, candidates


def _bookkeeping_run(out_dir, layout, tok, documents, candidates):
    ctx = ExperimentContext(
        documents=documents, candidates=candidates, dev_samples=[],
        tokenizer=tok, layout=layout,
        reader_cfg=ReaderTrainConfig(max_input_tokens=16, stride=4,
                                     max_answer_tokens=4, epochs=1),
        ens_cfg=DropoutEnsembleConfig(passes=2, base_seed=9),
    )
    pools = PoolState(pool=set(candidates))
    recipe = RecipeConfig(placement="al_on_reader_after_source", iterations=4,
                          batch_size=50, strategy="bald", seed=17,
                          eval_each_iteration=False)
    record = run_al(lambda: StubGenerationBackend(),
                    lambda: StubReaderBackend(seed=3),
                    pools, recipe, OracleAnnotator(dict(candidates)), ctx,
                    out_dir)
    return pools, record


def test_algorithm_bookkeeping_at_scale(tmp_path):
    started = time.monotonic()
    layout, tok, documents, candidates = _bookkeeping_world(10000)

    pools, record = _bookkeeping_run(tmp_path / "runA", layout, tok,
                                     documents, candidates)
    assert len(pools.labeled) == 200
    assert pools.iteration == 4
    for it in range(1, 5):
        state = record.read_poolstate(it)
        assert not (state.labeled & state.pool)
        assert len(state.labeled) == it * 50
        selected_now = set(state.history[-1][1])
        assert len(selected_now) == 50
        if it > 1:
            previous = record.read_poolstate(it - 1)
            assert selected_now <= previous.pool
    events = [e for e in record.read_log() if "reinit_identical" in e]
    assert all(e["reinit_identical"] for e in events)
    assert len(record.score_dumps()) == 4  # one dump per iteration

    # bit-identical replay under fixed seeds
    pools2, record2 = _bookkeeping_run(tmp_path / "runB", layout, tok,
                                       documents, candidates)
    assert pools.history == pools2.history
    for it in range(1, 5):
        a = (record.directory / f"poolstate_iter{it:02d}.json").read_bytes()
        b = (record2.directory / f"poolstate_iter{it:02d}.json").read_bytes()
        assert a == b

    _report("algorithm bookkeeping (10k pool, r=4, n=50, replayed)",
            started, budget=60)


# ---------------------------------------------------------------------------
# Criterion 4: filtering suite (< 10 s)
# ---------------------------------------------------------------------------

def _synthetic(sid, doc_id, logprob, question="q ?", answer="a"):
    return SyntheticSample(id=sid, document_id=doc_id, question=question,
                           answer_text=answer, answer_char_span=(0, 1),
                           provenance="synthetic", domain="toy",
                           generator_logprob_sum=logprob)


def test_filtering_suite():
    started = time.monotonic()
    rng = np.random.default_rng(7)

    # LM filter: exact per-context top-5 with ties broken by id
    samples = []
    for d in range(6):
        scores = list(np.round(rng.uniform(-8, 0, size=10), 6))
        scores[3] = scores[7]  # force a tie pair inside each context
        for i, s in enumerate(scores):
            samples.append(_synthetic(f"d{d}-s{i}", f"doc{d}", float(s)))
    kept = lm_score_filter(list(samples), top_n=5)
    by_doc = {}
    for s in samples:
        by_doc.setdefault(s.document_id, []).append(s)
    expected_ids = []
    for doc_id in sorted(by_doc):
        group = sorted(by_doc[doc_id],
                       key=lambda s: (-s.generator_logprob_sum, s.id))
        expected_ids.extend(s.id for s in group[:5])
    assert [s.id for s in kept] == expected_ids
    assert all(len([s for s in kept if s.document_id == f"doc{d}"]) == 5
               for d in range(6))

    # RTcons: keep/discard decisions match an exact-match oracle on 100
    # crafted pairs (reader scripted to echo a chosen span per context)
    layout = GenInputLayout(max_source_tokens=24, max_question_tokens=8,
                            max_total_tokens=40, chunk_stride=8)
    tok = WhitespaceTokenizer(specials=layout.specials)
    reader_cfg = ReaderTrainConfig(max_input_tokens=24, stride=8,
                                   max_answer_tokens=4, epochs=1)
    documents, crafted, predicted_words = {}, [], {}
    for i in range(100):
        text = f"item{i} first{i} second{i} third{i} tail{i}"
        doc = Document.build(f"rd{i}", text, "toy", tok)
        tok.encode(text)
        documents[doc.id] = doc
        generated = f"second{i}"
        # half the pairs get a reader prediction that disagrees
        predicted = generated if i % 2 == 0 else f"third{i}"
        predicted_words[doc.id] = predicted
        start = text.index(generated)
        crafted.append(SyntheticSample(
            id=f"rs{i:03d}", document_id=doc.id, question=f"which {i} ?",
            answer_text=generated, answer_char_span=(start, start + len(generated)),
            provenance="synthetic", domain="toy",
            generator_logprob_sum=-1.0))

    def span_fn(q_ids, ctx_ids, stochastic, seed):
        n = len(ctx_ids)
        doc_id = next(d for d, doc in documents.items()
                      if tok.encode(doc.text)[:1] == ctx_ids[:1])
        target = tok.token_to_id(predicted_words[doc_id])
        pos = ctx_ids.index(target)
        start_p = np.full(n, 1e-9)
        end_p = np.full(n, 1e-9)
        start_p[pos] = 1.0
        end_p[pos] = 1.0
        return np.log(start_p / start_p.sum()), np.log(end_p / end_p.sum())

    reader = StubReaderBackend(span_fn=span_fn)
    kept = rtcons_filter(list(crafted), reader, documents, tok, reader_cfg)
    oracle_keep = {s.id for s in crafted
                   if exact_match(predicted_words[s.document_id], s.answer_text)}
    assert {s.id for s in kept} == oracle_keep
    assert len(kept) == 50
    for s in crafted:
        assert s.rtcons_pass == (s.id in oracle_keep)

    _report("filtering suite (per-context top-5 + 100-pair rtcons oracle)",
            started, budget=10)


# ---------------------------------------------------------------------------
# Criterion 5: reader aggregation vs exhaustive enumeration (< 30 s)
# ---------------------------------------------------------------------------

def test_reader_aggregation_matches_enumeration():
    started = time.monotonic()
    tok = WhitespaceTokenizer()
    cfg = ReaderTrainConfig(max_input_tokens=24, stride=6, max_answer_tokens=5,
                            epochs=1)
    rng = np.random.default_rng(11)
    from alqa.corpus import chunk_context

    for trial in range(200):
        n = int(rng.integers(1, 65))
        doc = Document.build(f"doc{trial}", " ".join(f"w{i}" for i in range(n)),
                             "t", tok)
        backend = StubReaderBackend(seed=trial)
        question = "q ?"
        pred = predict(backend, question, doc, cfg, tok)

        q_ids = tok.encode(question)
        budget = cfg.max_input_tokens - len(q_ids)
        best = -np.inf
        for chunk in chunk_context(doc, budget, cfg.stride, tok):
            s_lp, e_lp = backend.span_distributions(q_ids, tok.encode(chunk.text))
            for e in range(len(s_lp)):
                for s in range(max(0, e - cfg.max_answer_tokens + 1), e + 1):
                    best = max(best, float(s_lp[s] + e_lp[e]))
        assert pred.score == pytest.approx(best, abs=1e-9)
    _report("reader aggregation vs exhaustive enumeration (200 inputs)",
            started, budget=30)


# ---------------------------------------------------------------------------
# Criterion 6: EM/F1 hand-computed 12-case oracle table
# ---------------------------------------------------------------------------

def _f1_from_counts(overlap, pred_len, gold_len):
    precision = overlap / pred_len
    recall = overlap / gold_len
    return 2 * precision * recall / (precision + recall)


def test_em_f1_twelve_case_oracle_table():
    started = time.monotonic()
    # (prediction, golds, expected EM, expected F1), hand-computed with the
    # reference normalization (lowercase, strip punctuation, strip articles,
    # collapse whitespace)
    table = [
        ("The Liver.", ["liver"], 1.0, 1.0),
        ("liver", ["the liver"], 1.0, 1.0),
        ("a cat", ["cat"], 1.0, 1.0),
        ("cat!", ["cat."], 1.0, 1.0),
        ("red car", ["blue car"], 0.0, _f1_from_counts(1, 2, 2)),
        ("", [""], 1.0, 1.0),
        ("something", [""], 0.0, 0.0),
        ("", ["something"], 0.0, 0.0),
        ("b c", ["a b c"], 1.0, 1.0),           # gold's article strips away
        ("x y z", ["x q", "y z w"], 0.0, _f1_from_counts(2, 3, 3)),
        ("exact span", ["different words", "exact span"], 1.0, 1.0),
        ("a b c", ["b c d"], 0.0, _f1_from_counts(2, 2, 3)),  # "a" strips
    ]
    for pred, golds, want_em, want_f1 in table:
        em = max_over_golds(exact_match, pred, golds)
        f1 = max_over_golds(token_f1, pred, golds)
        assert em == want_em, (pred, golds)
        assert f1 == want_f1, (pred, golds)
    _report("EM/F1 12-case oracle table", started, budget=10)


# ---------------------------------------------------------------------------
# Criterion 7: end-to-end toy pipeline (< 15 min CPU)
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_end_to_end_toy_pipeline(tmp_path):
    started = time.monotonic()
    from conftest import build_toy_world, train_toy_generator, train_toy_reader

    world = build_toy_world(n_source=100, n_target=400, seed=29)
    docs_by_id = world.documents_by_id
    target_docs, target_samples = world.split("toytgt")

    # full-supervision reference: the reader must master the toy task
    full_reader, reader_cfg, full_dev = train_toy_reader(world, epochs=10)
    full_f1 = evaluate(full_reader, full_dev, reader_cfg, docs_by_id,
                       world.tokenizer).f1
    assert full_f1 >= 0.9
    print(f"[acceptance] toy full-supervision dev F1 = {full_f1:.3f}")

    # source-fitted backends for the AL pipeline
    gen = train_toy_generator(world, epochs=20, seed=1)
    gen_base = gen.get_state()
    source_reader, _, _ = train_toy_reader(world, domain="toysrc", epochs=6,
                                           seed=2)
    reader_source_state = source_reader.get_state()

    dev_samples = target_samples[:16]
    pool_ids = subsample_pool({s.id for s in target_samples[16:]}, 60, seed=4)
    candidates = {s.id: s for s in target_samples if s.id in pool_ids}

    results = {}
    for strategy in ("rt", "random"):
        gen.set_state(gen_base)
        source_reader.set_state(reader_source_state)
        from alqa.generator import GenTrainConfig

        ctx = ExperimentContext(
            documents=docs_by_id,
            candidates=dict(candidates),
            dev_samples=dev_samples,
            tokenizer=world.tokenizer,
            layout=world.layout,
            gen_cfg=GenTrainConfig(epochs_target=4, learning_rate=1e-3,
                                   batch_size=16),
            reader_cfg=reader_cfg,
            synth_cfg=SynthesisConfig(min_context_tokens=5,
                                      questions_per_context=3,
                                      lm_filter_top_n=2, max_documents=40),
            ens_cfg=DropoutEnsembleConfig(passes=2, base_seed=6),
            synthesis_documents=target_docs[:40],
            reader_source_state=reader_source_state,
        )
        recipe = RecipeConfig(placement="al_on_generator", iterations=2,
                              batch_size=10, strategy=strategy, seed=13,
                              filter_mode="both")
        record = run_al(lambda: gen, lambda: source_reader, PoolState(pool=set(candidates)),
                        recipe, OracleAnnotator(dict(candidates)), ctx,
                        tmp_path / f"e2e-{strategy}")
        metrics = record.read_metrics()
        assert metrics["labeled_total"] == 20
        assert metrics["synthesized"] >= 0
        assert "filtered" in metrics
        results[strategy] = metrics

    # deltas reported, not asserted: stochastic at toy scale
    rt_f1 = results["rt"].get("dev_f1", float("nan"))
    random_f1 = results["random"].get("dev_f1", float("nan"))
    print(f"[acceptance] toy AL-vs-random dev F1: rt={rt_f1:.3f} "
          f"random={random_f1:.3f} delta={rt_f1 - random_f1:+.3f}")
    print(f"[acceptance] toy pipeline synthesized: "
          f"rt={results['rt']['synthesized']} random={results['random']['synthesized']}, "
          f"filtered: rt={results['rt']['filtered']} random={results['random']['filtered']}")
    _report("end-to-end toy pipeline (al_on_generator, both filters)",
            started, budget=900)


# ---------------------------------------------------------------------------
# Criterion 8: report parity with the selection-statistics tables
# ---------------------------------------------------------------------------

def test_report_parity_selection_statistics():
    started = time.monotonic()
    layout = GenInputLayout(max_source_tokens=32, max_question_tokens=12,
                            max_total_tokens=64, chunk_stride=8,
                            max_answer_tokens=4)
    tok = WhitespaceTokenizer(specials=layout.specials)
    documents, all_samples = {}, []
    for i in range(300):
        text = " ".join(f"d{i}w{j}" for j in range(8))
        doc = Document.build(f"d{i}", text, "toy", tok)
        tok.encode(text)
        documents[doc.id] = doc
        start = text.index(f"d{i}w2")
        all_samples.append(QASample(
            id=f"s{i:03d}", document_id=doc.id, question=f"which {i} ?",
            answer_text=f"d{i}w2", answer_char_span=(start, start + len(f"d{i}w2")),
            provenance="oracle", domain="toy"))

    selections = {
        "rt": all_samples[:200],
        "dsp": all_samples[50:250],
        "random": all_samples[100:300],
    }
    report = report_sample_stats(
        selections, documents,
        {"whitespace": tok, "wide": WhitespaceTokenizer()},
        layout=layout,
        reader_cfg=ReaderTrainConfig(max_input_tokens=32, stride=8, epochs=1))

    for strategy, entry in report["per_strategy"].items():
        assert entry["samples"] == 200
        assert entry["unique_contexts"] == 200
        assert set(entry["mean_context_tokens"]) == {"whitespace", "wide"}
        assert entry["mean_context_tokens"]["whitespace"] == pytest.approx(8.0)
        assert set(entry["instances"]) == {"reader", "generator"}
        assert entry["instances"]["generator"] == 400  # two pairs per sample

    names = sorted(selections)
    for a in names:
        assert report["overlap"][a][a] == 200  # diagonal = selection size
        for b in names:
            assert report["overlap"][a][b] == report["overlap"][b][a]
    assert report["overlap"]["rt"]["dsp"] == 150
    assert report["overlap"]["rt"]["random"] == 100
    _report("report parity (selection statistics + overlap matrix)",
            started, budget=30)
