"""Sampling and search primitives shared by generation backends.

A backend exposes decoding through a step function mapping a decoded prefix
(token ids, excluding the start token) to a log-probability vector over the
vocabulary. Everything here is numpy-only so the logic stays testable
without a model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FILTER_ORDERS = ("topk_then_nucleus", "nucleus_then_topk")


def _renormalize(logprobs: np.ndarray, keep: np.ndarray) -> np.ndarray:
    out = np.full_like(logprobs, -np.inf)
    kept = logprobs[keep]
    logz = np.logaddexp.reduce(kept)
    out[keep] = kept - logz
    return out


def _topk_mask(logprobs: np.ndarray, k: int) -> np.ndarray:
    k = min(k, logprobs.size)
    thresh = np.partition(logprobs, -k)[-k]
    mask = logprobs >= thresh
    if mask.sum() > k:  # break score ties by index order
        idx = np.argsort(-logprobs, kind="stable")[:k]
        mask = np.zeros_like(mask)
        mask[idx] = True
    return mask


def _nucleus_mask(logprobs: np.ndarray, p: float) -> np.ndarray:
    order = np.argsort(-logprobs, kind="stable")
    probs = np.exp(logprobs[order] - np.logaddexp.reduce(logprobs))
    cum = np.cumsum(probs)
    cutoff = int(np.searchsorted(cum, p)) + 1
    mask = np.zeros(logprobs.shape, dtype=bool)
    mask[order[:cutoff]] = True
    return mask


def filter_logprobs(
    logprobs: np.ndarray,
    top_k: int | None = None,
    nucleus_p: float | None = None,
    order: str = "topk_then_nucleus",
) -> np.ndarray:
    """Truncate a log-prob vector to the top-k / nucleus set and renormalize.

    The smallest set of highest-probability tokens whose mass reaches
    nucleus_p is kept; the application order of the two truncations is
    configurable.
    """
    if order not in FILTER_ORDERS:
        raise ValueError(f"unknown filter order {order!r}")
    lp = np.asarray(logprobs, dtype=np.float64)
    stages = [("topk", top_k), ("nucleus", nucleus_p)]
    if order == "nucleus_then_topk":
        stages.reverse()
    for kind, arg in stages:
        if arg is None:
            continue
        mask = _topk_mask(lp, arg) if kind == "topk" else _nucleus_mask(lp, arg)
        lp = _renormalize(lp, mask)
    return lp


def sample_token(logprobs: np.ndarray, rng: np.random.Generator) -> int:
    probs = np.exp(logprobs - np.logaddexp.reduce(logprobs))
    probs = probs / probs.sum()
    return int(rng.choice(probs.size, p=probs))


def sample_sequence(
    step_fn,
    eos_token: int,
    max_len: int,
    rng: np.random.Generator,
    top_k: int | None = None,
    nucleus_p: float | None = None,
    order: str = "topk_then_nucleus",
) -> list[int]:
    """Ancestral sampling with top-k/nucleus truncation at every step.

    Emits up to max_len tokens; stops after emitting eos_token. The eos, when
    produced, is included in the returned sequence.
    """
    seq: list[int] = []
    for _ in range(max_len):
        lp = filter_logprobs(step_fn(seq), top_k, nucleus_p, order)
        tok = sample_token(lp, rng)
        seq.append(tok)
        if tok == eos_token:
            break
    return seq


@dataclass
class Hypothesis:
    tokens: list[int]
    logprob: float
    finished: bool


def beam_search(step_fn, eos_token: int, beam_size: int, max_len: int) -> list[int]:
    """Beam search over the step function; returns the best token sequence.

    Finished hypotheses (those that emitted eos) are preferred over
    unfinished ones; among equals the higher total log-probability wins.
    Sequences include the eos token when one was produced.
    """
    beams = [Hypothesis([], 0.0, False)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        candidates: list[Hypothesis] = []
        for hyp in beams:
            lp = np.asarray(step_fn(hyp.tokens), dtype=np.float64)
            top = np.argsort(-lp, kind="stable")[:beam_size]
            for tok in top:
                tok = int(tok)
                candidates.append(Hypothesis(
                    hyp.tokens + [tok], hyp.logprob + float(lp[tok]),
                    tok == eos_token))
        candidates.sort(key=lambda h: -h.logprob)
        beams = []
        for hyp in candidates:
            if hyp.finished:
                finished.append(hyp)
            else:
                beams.append(hyp)
            if len(beams) == beam_size:
                break
        if not beams:
            break
    pool = finished if finished else beams
    best = max(pool, key=lambda h: h.logprob)
    return best.tokens
