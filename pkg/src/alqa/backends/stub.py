"""Hash-deterministic stub backends.

These exist for fast, bit-reproducible pipeline runs: scoring fixtures,
Algorithm-style loop bookkeeping at scale, and wire-format tests. All
pseudo-randomness is derived from sha256 of the inputs, so results are
stable across processes and replays.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from alqa.backends.base import GenerationBackend, ReaderBackend, register_backend


def stable_seed(*parts) -> int:
    payload = json.dumps(parts, separators=(",", ":"), sort_keys=True)
    digest = hashlib.sha256(payload.encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 31)


def _rng(*parts) -> np.random.Generator:
    return np.random.default_rng(stable_seed(*parts))


@register_backend
class StubGenerationBackend(GenerationBackend):
    """Generation backend with injectable, hash-derived default behavior.

    sample_fn / beam_fn / logprob_fn override decoding and scoring for
    fixture tests; without overrides the stub emits a short deterministic
    token sequence per (source, pass seed).
    """

    backend_id = "stub-gen"

    def __init__(self, vocab_size: int = 64, sample_fn=None, beam_fn=None,
                 logprob_fn=None, seed: int = 0):
        self.vocab_size = vocab_size
        self.sample_fn = sample_fn
        self.beam_fn = beam_fn
        self.logprob_fn = logprob_fn
        self.seed = seed
        self.stochastic = False
        self.stochastic_seed = 0
        self._epochs_trained = 0
        self._trained_hash = 0

    def _pass_key(self):
        return self.stochastic_seed if self.stochastic else -1

    def _default_decode(self, source, bos_token, eos_token, extra_key):
        rng = _rng(self.seed, self._trained_hash, self._pass_key(),
                   list(source), bos_token, extra_key)
        length = int(rng.integers(2, 5))
        body = [int(t) for t in rng.integers(0, self.vocab_size, size=length)]
        return body + [eos_token]

    def sequence_logprobs(self, source, target):
        if self.logprob_fn is not None:
            return list(self.logprob_fn(source, target, self.stochastic,
                                        self.stochastic_seed))
        rng = _rng(self.seed, self._trained_hash, self._pass_key(),
                   list(source), list(target))
        return [float(x) for x in -rng.uniform(0.05, 2.5, size=max(len(target) - 1, 0))]

    def sample(self, source, bos_token, eos_token, nucleus_p, top_k, max_len,
               seed, filter_order="topk_then_nucleus"):
        if self.sample_fn is not None:
            return list(self.sample_fn(source, bos_token, eos_token, seed))
        return self._default_decode(source, bos_token, eos_token, ("sample", seed))[:max_len]

    def beam_decode(self, source, bos_token, eos_token, beam_size, max_len):
        if self.beam_fn is not None:
            return list(self.beam_fn(source, bos_token, eos_token))
        return self._default_decode(source, bos_token, eos_token, "beam")[:max_len]

    def set_stochastic(self, flag, seed=None):
        self.stochastic = flag
        if seed is not None:
            self.stochastic_seed = seed

    def train_epoch(self, pairs, lr, batch_size, seed, warmup_done=1.0):
        self._epochs_trained += 1
        self._trained_hash = stable_seed(self._trained_hash,
                                         [list(s) + list(t) for s, t in pairs])
        return 1.0 / (1 + self._epochs_trained)

    def loss(self, pairs):
        return 1.0 / (1 + self._epochs_trained)

    def get_state(self):
        return {"epochs": self._epochs_trained, "trained": self._trained_hash}

    def set_state(self, state):
        self._epochs_trained = state["epochs"]
        self._trained_hash = state["trained"]

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "backend.json").write_text(json.dumps({
            "backend_id": self.backend_id, "vocab_size": self.vocab_size,
            "seed": self.seed, "state": self.get_state()}))

    @classmethod
    def load(cls, directory):
        meta = json.loads((Path(directory) / "backend.json").read_text())
        backend = cls(vocab_size=meta["vocab_size"], seed=meta["seed"])
        backend.set_state(meta["state"])
        return backend


@register_backend
class StubReaderBackend(ReaderBackend):
    """Reader stub emitting hash-derived (or injected) span distributions."""

    backend_id = "stub-reader"

    def __init__(self, span_fn=None, seed: int = 0):
        self.span_fn = span_fn
        self.seed = seed
        self.stochastic = False
        self.stochastic_seed = 0
        self._epochs_trained = 0
        self._trained_hash = 0

    def _pass_key(self):
        return self.stochastic_seed if self.stochastic else -1

    def span_distributions(self, question_tokens, chunk_tokens):
        if self.span_fn is not None:
            return self.span_fn(question_tokens, chunk_tokens, self.stochastic,
                                self.stochastic_seed)
        n = max(len(chunk_tokens), 1)
        rng = _rng(self.seed, self._trained_hash, self._pass_key(),
                   list(question_tokens), list(chunk_tokens))
        start = rng.dirichlet(np.ones(n))
        end = rng.dirichlet(np.ones(n))
        return np.log(start), np.log(end)

    def set_stochastic(self, flag, seed=None):
        self.stochastic = flag
        if seed is not None:
            self.stochastic_seed = seed

    def train_epoch(self, features, lr, batch_size, seed):
        self._epochs_trained += 1
        self._trained_hash = stable_seed(self._trained_hash, len(features))
        return 1.0 / (1 + self._epochs_trained)

    def get_state(self):
        return {"epochs": self._epochs_trained, "trained": self._trained_hash}

    def set_state(self, state):
        self._epochs_trained = state["epochs"]
        self._trained_hash = state["trained"]

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "backend.json").write_text(json.dumps({
            "backend_id": self.backend_id, "seed": self.seed,
            "state": self.get_state()}))

    @classmethod
    def load(cls, directory):
        meta = json.loads((Path(directory) / "backend.json").read_text())
        backend = cls(seed=meta["seed"])
        backend.set_state(meta["state"])
        return backend
