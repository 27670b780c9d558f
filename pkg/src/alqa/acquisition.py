"""Scoring strategies for pool-based sample selection.

Generator-side strategies (confidence of the generated answer, agreement
across dropout realizations, round-trip reader agreement) score a
candidate's context; the reader-side strategy (mutual information between
span predictions and model weights, estimated via dropout passes) scores a
question+context sample. Priority orientation is explicit: higher priority
means selected for annotation, and every strategy maps its least-confident
candidates to maximal priority.
"""

from __future__ import annotations

import difflib
import logging
from dataclasses import dataclass, field

import numpy as np

from alqa.backends.stub import stable_seed
from alqa.corpus import Document, Tokenizer, token_f1
from alqa.generator import (
    DecodeConfig,
    GenInputLayout,
    generate_pair_verbose,
    score_answer_sentence,
)
from alqa.reader import ReaderTrainConfig, predict, sample_chunks

log = logging.getLogger(__name__)

STRATEGIES = ("sp", "dsp", "ls", "rt", "dsp_rt", "bald", "random")

# priority = sign * raw_score; the least-confident candidate must rank first
_PRIORITY_SIGN = {"sp": -1.0, "dsp": -1.0, "ls": -1.0, "rt": -1.0,
                  "dsp_rt": -1.0, "bald": 1.0}


@dataclass
class AcquisitionScore:
    candidate_id: str
    strategy: str
    raw_score: float
    priority: float
    iteration: int = 0
    passes: int = 0
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"candidate_id": self.candidate_id, "strategy": self.strategy,
                "raw_score": self.raw_score, "priority": self.priority,
                "iteration": self.iteration, "passes": self.passes,
                "flags": list(self.flags)}


def make_score(candidate_id: str, strategy: str, raw_score: float,
               iteration: int = 0, passes: int = 0,
               flags: tuple[str, ...] = (), seed: int = 0) -> AcquisitionScore:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "random":
        draw = float(np.random.default_rng(
            stable_seed(seed, iteration, candidate_id)).uniform())
        raw_score, priority = draw, draw
    else:
        priority = _PRIORITY_SIGN[strategy] * raw_score
    return AcquisitionScore(candidate_id=candidate_id, strategy=strategy,
                            raw_score=raw_score, priority=priority,
                            iteration=iteration, passes=passes, flags=flags)


@dataclass
class DropoutEnsembleConfig:
    passes: int = 10
    base_seed: int = 0
    stochastic: bool = True

    def __post_init__(self):
        if self.passes < 1:
            raise ValueError("ensemble needs at least one pass")

    def pass_seed(self, candidate_key: str, pass_index: int) -> int:
        return stable_seed(self.base_seed, candidate_key, pass_index)

    def to_dict(self) -> dict:
        return {"passes": self.passes, "base_seed": self.base_seed,
                "stochastic": self.stochastic}


@dataclass
class ScoreResult:
    raw: float
    flags: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Deterministic two-step decode shared by SP / D-SP / RT
# ---------------------------------------------------------------------------

def _truncate_context(context_text: str, layout: GenInputLayout,
                      tokenizer: Tokenizer) -> str:
    offs = tokenizer.offsets(context_text)
    if len(offs) > layout.max_source_tokens:
        return context_text[:offs[layout.max_source_tokens - 1][1]]
    return context_text


def _decode_fixed_pair(gen_backend, tokenizer, layout, context_text, beam_size):
    """Greedy (beam) two-step decode with dropout off; fixes the (q, a)
    prediction that subsequent scoring passes reuse."""
    gen_backend.set_stochastic(False)
    cfg = DecodeConfig(question_sampling=False, beam_size=beam_size)
    return generate_pair_verbose(gen_backend, tokenizer, context_text, layout, cfg)


def score_sp(gen_backend, tokenizer: Tokenizer, layout: GenInputLayout,
             context_text: str, beam_size: int = 10) -> ScoreResult:
    """Length-normalized log-probability of the beam-decoded answer."""
    context_text = _truncate_context(context_text, layout, tokenizer)
    pair, reason = _decode_fixed_pair(gen_backend, tokenizer, layout,
                                      context_text, beam_size)
    if pair is None:
        return ScoreResult(0.0, ("decode_failed", reason))
    raw = score_answer_sentence(gen_backend, tokenizer, layout,
                                tokenizer.encode(context_text),
                                pair.question_token_ids, pair.answer_token_ids)
    return ScoreResult(raw, (), {"pair": pair})


def score_dsp(gen_backend, tokenizer: Tokenizer, layout: GenInputLayout,
              context_text: str, cfg: DropoutEnsembleConfig,
              candidate_key: str = "", beam_size: int = 10) -> ScoreResult:
    """Mean answer log-probability over dropout realizations scoring the
    same fixed prediction."""
    context_text = _truncate_context(context_text, layout, tokenizer)
    pair, reason = _decode_fixed_pair(gen_backend, tokenizer, layout,
                                      context_text, beam_size)
    if pair is None:
        return ScoreResult(0.0, ("decode_failed", reason))
    ctx_ids = tokenizer.encode(context_text)
    values = []
    try:
        for n in range(cfg.passes):
            gen_backend.set_stochastic(cfg.stochastic,
                                       cfg.pass_seed(candidate_key, n))
            values.append(score_answer_sentence(
                gen_backend, tokenizer, layout, ctx_ids,
                pair.question_token_ids, pair.answer_token_ids))
    finally:
        gen_backend.set_stochastic(False)
    return ScoreResult(float(np.mean(values)), (), {"pair": pair})


def score_ls(gen_backend, tokenizer: Tokenizer, layout: GenInputLayout,
             context_text: str, cfg: DropoutEnsembleConfig,
             candidate_key: str = "", sim_fn=None,
             beam_size: int = 10) -> ScoreResult:
    """Mean pairwise lexical similarity of answers decoded under different
    dropout realizations; disagreement signals uncertainty."""
    if cfg.passes < 2:
        raise ValueError("lexical similarity needs at least two passes")
    sim_fn = sim_fn or lexical_similarity
    context_text = _truncate_context(context_text, layout, tokenizer)
    pair, reason = _decode_fixed_pair(gen_backend, tokenizer, layout,
                                      context_text, beam_size)
    if pair is None:
        return ScoreResult(0.0, ("decode_failed", reason))

    qo, qc, ao, ac = (tokenizer.token_to_id(t) for t in layout.specials)
    src2 = tokenizer.encode(context_text) + [qo, *pair.question_token_ids, qc]
    answers = []
    try:
        for n in range(cfg.passes):
            gen_backend.set_stochastic(cfg.stochastic,
                                       cfg.pass_seed(candidate_key, n))
            seq = gen_backend.beam_decode(src2, ao, ac, beam_size,
                                          layout.max_answer_tokens + 1)
            if ac in seq:
                answers.append(tokenizer.decode(seq[:seq.index(ac)]))
            else:
                answers.append("")
    finally:
        gen_backend.set_stochastic(False)

    n = cfg.passes
    total = sum(sim_fn(answers[i], answers[j])
                for i in range(n) for j in range(n) if i != j)
    return ScoreResult(total / (n * (n - 1)), (), {"answers": answers})


def score_rt(gen_backend, reader_backend, tokenizer: Tokenizer,
             layout: GenInputLayout, reader_cfg: ReaderTrainConfig,
             context_text: str, beam_size: int = 10) -> ScoreResult:
    """Token F1 between the reader's answer and the generator's answer for
    the same generated question. Low agreement means the pair is hard for
    the downstream model, so it is preferred for annotation."""
    context_text = _truncate_context(context_text, layout, tokenizer)
    pair, reason = _decode_fixed_pair(gen_backend, tokenizer, layout,
                                      context_text, beam_size)
    if pair is None:
        return ScoreResult(0.0, ("decode_failed", reason))
    context_doc = Document.build("rt-context", context_text, "", tokenizer)
    reader_backend.set_stochastic(False)
    pred = predict(reader_backend, pair.question, context_doc, reader_cfg,
                   tokenizer)
    raw = token_f1(pred.answer_text, pair.answer_text)
    return ScoreResult(raw, (), {"pair": pair, "predicted": pred.answer_text})


def combine_dsp_rt(dsp_raw: float, rt_raw: float) -> float:
    """Rescale the nonpositive dropout sentence probability into (0, 1]
    (squared exponential with temperature 4) and add the round-trip score,
    so both components share the orientation where 1.0 is best."""
    return float(np.exp(4.0 * dsp_raw) ** 2 + rt_raw)


def score_dsp_rt(gen_backend, reader_backend, tokenizer: Tokenizer,
                 layout: GenInputLayout, reader_cfg: ReaderTrainConfig,
                 context_text: str, cfg: DropoutEnsembleConfig,
                 candidate_key: str = "", beam_size: int = 10) -> ScoreResult:
    dsp = score_dsp(gen_backend, tokenizer, layout, context_text, cfg,
                    candidate_key, beam_size)
    rt = score_rt(gen_backend, reader_backend, tokenizer, layout, reader_cfg,
                  context_text, beam_size)
    flags = tuple(dict.fromkeys(dsp.flags + rt.flags))
    return ScoreResult(combine_dsp_rt(dsp.raw, rt.raw), flags,
                       {"dsp": dsp.raw, "rt": rt.raw})


# ---------------------------------------------------------------------------
# BALD
# ---------------------------------------------------------------------------

def _entropy(probs: np.ndarray) -> float:
    p = np.asarray(probs, dtype=np.float64)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


def bald_from_distributions(pass_probs) -> float:
    """Mutual information between the prediction and the model realization:
    entropy of the mean distribution minus mean per-pass entropy."""
    pp = np.asarray(pass_probs, dtype=np.float64)
    mean = pp.mean(axis=0)
    return _entropy(mean) - float(np.mean([_entropy(row) for row in pp]))


def score_bald(reader_backend, tokenizer: Tokenizer, question: str,
               document: Document, reader_cfg: ReaderTrainConfig,
               cfg: DropoutEnsembleConfig, candidate_key: str = "") -> ScoreResult:
    """Start-BALD plus end-BALD per chunk; multi-chunk candidates take the
    most uncertain window."""
    from alqa.corpus import QASample  # local: only the question is used

    probe = QASample(id="bald-probe", document_id=document.id,
                     question=question, answer_text=document.text[:1],
                     answer_char_span=(0, 1), provenance="oracle",
                     domain=document.domain)
    q_ids, chunks = sample_chunks(probe, document, tokenizer, reader_cfg,
                                  with_answer=False)
    chunk_token_ids = [tokenizer.encode(c.text) for c in chunks]

    starts = [[] for _ in chunks]
    ends = [[] for _ in chunks]
    try:
        for n in range(cfg.passes):
            reader_backend.set_stochastic(cfg.stochastic,
                                          cfg.pass_seed(candidate_key, n))
            for ci, ctx_ids in enumerate(chunk_token_ids):
                s_lp, e_lp = reader_backend.span_distributions(q_ids, ctx_ids)
                starts[ci].append(np.exp(np.asarray(s_lp, dtype=np.float64)))
                ends[ci].append(np.exp(np.asarray(e_lp, dtype=np.float64)))
    finally:
        reader_backend.set_stochastic(False)

    best = 0.0
    for ci in range(len(chunks)):
        score = bald_from_distributions(starts[ci]) + bald_from_distributions(ends[ci])
        best = max(best, score)
    return ScoreResult(best)


# ---------------------------------------------------------------------------
# Lexical similarity (self-contained Meteor-style metric)
# ---------------------------------------------------------------------------

def lexical_similarity(a: str, b: str) -> float:
    """Exact-match unigram alignment scored by a recall-weighted harmonic
    mean with a fragmentation penalty: Fmean = PR/(0.9P + 0.1R), penalty =
    0.5 (chunks/matches)^3. Empty strings never match anything."""
    a_toks = a.lower().split()
    b_toks = b.lower().split()
    if not a_toks or not b_toks:
        return 0.0
    sm = difflib.SequenceMatcher(None, a_toks, b_toks, autojunk=False)
    blocks = [bl for bl in sm.get_matching_blocks() if bl.size > 0]
    matches = sum(bl.size for bl in blocks)
    if matches == 0:
        return 0.0
    precision = matches / len(a_toks)
    recall = matches / len(b_toks)
    fmean = precision * recall / (0.9 * precision + 0.1 * recall)
    penalty = 0.5 * (len(blocks) / matches) ** 3
    return fmean * (1.0 - penalty)


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------

def rank_and_select(scores, n: int) -> list[str]:
    """Top-n candidate ids by priority, ties broken by candidate id.

    A pure function of the score set: input order never matters.
    """
    strategies = {s.strategy for s in scores}
    if len(strategies) > 1:
        raise ValueError(f"scores mix strategies: {sorted(strategies)}")
    iterations = {s.iteration for s in scores}
    if len(iterations) > 1:
        raise ValueError(f"scores mix iterations: {sorted(iterations)}")
    if n > len(scores):
        log.warning("requested %d candidates from a pool of %d; selecting all",
                    n, len(scores))
        n = len(scores)
    ordered = sorted(scores, key=lambda s: (-s.priority, s.candidate_id))
    return [s.candidate_id for s in ordered[:n]]


# ---------------------------------------------------------------------------
# Dispatcher over a candidate pool
# ---------------------------------------------------------------------------

def score_candidates(
    strategy: str,
    candidates,
    documents: dict[str, Document],
    tokenizer: Tokenizer,
    *,
    gen_backend=None,
    reader_backend=None,
    layout: GenInputLayout | None = None,
    reader_cfg: ReaderTrainConfig | None = None,
    ens_cfg: DropoutEnsembleConfig | None = None,
    iteration: int = 0,
    seed: int = 0,
    beam_size: int = 10,
) -> list[AcquisitionScore]:
    """Score a pool of QASample candidates with one strategy.

    Generator-side strategies score the candidate's context; per-document
    results are cached so samples sharing a context are scored once.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    ens_cfg = ens_cfg or DropoutEnsembleConfig()
    reader_cfg = reader_cfg or ReaderTrainConfig()
    passes_used = {"sp": 1, "rt": 1, "random": 0}.get(strategy, ens_cfg.passes)

    context_cache: dict[str, ScoreResult] = {}

    def context_score(doc: Document) -> ScoreResult:
        if doc.id in context_cache:
            return context_cache[doc.id]
        text = doc.text
        if strategy == "sp":
            res = score_sp(gen_backend, tokenizer, layout, text, beam_size)
        elif strategy == "dsp":
            res = score_dsp(gen_backend, tokenizer, layout, text, ens_cfg,
                            doc.id, beam_size)
        elif strategy == "ls":
            res = score_ls(gen_backend, tokenizer, layout, text, ens_cfg,
                           doc.id, beam_size=beam_size)
        elif strategy == "rt":
            res = score_rt(gen_backend, reader_backend, tokenizer, layout,
                           reader_cfg, text, beam_size)
        elif strategy == "dsp_rt":
            res = score_dsp_rt(gen_backend, reader_backend, tokenizer, layout,
                               reader_cfg, text, ens_cfg, doc.id, beam_size)
        else:
            raise AssertionError(strategy)
        context_cache[doc.id] = res
        return res

    out = []
    for sample in candidates:
        if strategy == "random":
            out.append(make_score(sample.id, strategy, 0.0, iteration,
                                  passes_used, seed=seed))
            continue
        doc = documents[sample.document_id]
        if strategy == "bald":
            res = score_bald(reader_backend, tokenizer, sample.question, doc,
                             reader_cfg, ens_cfg, sample.id)
        else:
            res = context_score(doc)
        out.append(make_score(sample.id, strategy, res.raw, iteration,
                              passes_used, res.flags, seed=seed))
    return out
