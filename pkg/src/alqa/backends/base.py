"""Pluggable model contracts.

The framework never inspects backend internals: generation backends expose
token-level scoring, sampling, beam decoding and inference-time dropout;
reader backends expose per-token span distributions. Tiny from-scratch
models satisfy the same contract as large pretrained ones.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np


class GenerationBackend(ABC):
    """Conditional sequence model contract for QA-pair generation."""

    backend_id = "abstract-gen"

    @abstractmethod
    def sequence_logprobs(self, source: list[int], target: list[int]) -> list[float]:
        """Per-step log p(target[t] | target[<t], source) for t = 1..len-1.

        target[0] is the begin-of-sequence token (given, never scored), so
        the returned list has len(target) - 1 entries.
        """

    @abstractmethod
    def sample(self, source: list[int], bos_token: int, eos_token: int,
               nucleus_p: float, top_k: int, max_len: int, seed: int,
               filter_order: str = "topk_then_nucleus") -> list[int]:
        """Sample a continuation of bos_token; returns emitted tokens
        (eos included when produced, bos excluded)."""

    @abstractmethod
    def beam_decode(self, source: list[int], bos_token: int, eos_token: int,
                    beam_size: int, max_len: int) -> list[int]:
        """Beam-search a continuation of bos_token; same return convention
        as sample()."""

    @abstractmethod
    def set_stochastic(self, flag: bool, seed: int | None = None) -> None:
        """Enable inference-time dropout (one model realization per seed)."""

    @abstractmethod
    def train_epoch(self, pairs, lr: float, batch_size: int, seed: int,
                    warmup_done: float = 1.0) -> float:
        """One optimization pass over (source, target) pairs; returns mean loss."""

    @abstractmethod
    def loss(self, pairs) -> float:
        """Mean loss over pairs without updating parameters."""

    def reset_optimizer(self) -> None:
        pass

    @abstractmethod
    def get_state(self):
        """Snapshot of all learnable state (deep copy)."""

    @abstractmethod
    def set_state(self, state) -> None:
        pass

    @abstractmethod
    def save(self, directory: str | Path) -> None:
        pass

    def train(self, pairs, cfg, dev):
        from alqa.generator import train_generator
        return train_generator(self, pairs, cfg, dev)


class ReaderBackend(ABC):
    """Span-extraction model contract."""

    backend_id = "abstract-reader"

    @abstractmethod
    def span_distributions(self, question_tokens: list[int],
                           chunk_tokens: list[int]) -> tuple[np.ndarray, np.ndarray]:
        """Start and end log-prob vectors over the chunk tokens; each
        normalizes to probability 1 over the chunk."""

    @abstractmethod
    def set_stochastic(self, flag: bool, seed: int | None = None) -> None:
        pass

    @abstractmethod
    def train_epoch(self, features, lr: float, batch_size: int, seed: int) -> float:
        """One optimization pass over ReaderFeature batches; returns mean loss."""

    def reset_optimizer(self) -> None:
        pass

    @abstractmethod
    def get_state(self):
        pass

    @abstractmethod
    def set_state(self, state) -> None:
        pass

    @abstractmethod
    def save(self, directory: str | Path) -> None:
        pass

    def train(self, samples, cfg, dev, documents):
        from alqa.reader import train_reader
        return train_reader(self, samples, cfg, dev, documents)


# ---------------------------------------------------------------------------
# Registry + checkpoint loading
# ---------------------------------------------------------------------------

_REGISTRY: dict[str, type] = {}


def register_backend(cls):
    """Class decorator registering a backend type for checkpoint loading."""
    _REGISTRY[cls.backend_id] = cls
    return cls


def _ensure_builtin_backends() -> None:
    # registration happens at import time; pull in the built-in modules
    import alqa.backends.stub  # noqa: F401
    try:
        import alqa.backends.tiny_gen  # noqa: F401
        import alqa.backends.tiny_reader  # noqa: F401
    except ImportError:  # torch missing: stub backends remain available
        pass


def _load(directory: str | Path, expected: type):
    _ensure_builtin_backends()
    directory = Path(directory)
    meta = json.loads((directory / "backend.json").read_text())
    cls = _REGISTRY.get(meta["backend_id"])
    if cls is None:
        raise ValueError(f"unknown backend id {meta['backend_id']!r}")
    backend = cls.load(directory)
    if not isinstance(backend, expected):
        raise TypeError(f"{meta['backend_id']} is not a {expected.__name__}")
    return backend


def load_generation_backend(directory: str | Path) -> GenerationBackend:
    return _load(directory, GenerationBackend)


def load_reader_backend(directory: str | Path) -> ReaderBackend:
    return _load(directory, ReaderBackend)


def states_equal(a, b) -> bool:
    """Deep equality over backend state snapshots (dicts, arrays, tensors)."""
    if type(a) is not type(b):
        return False
    if isinstance(a, dict):
        if a.keys() != b.keys():
            return False
        return all(states_equal(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(states_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and bool((a == b).all())
    try:
        import torch
        if isinstance(a, torch.Tensor):
            return a.shape == b.shape and bool(torch.equal(a, b))
    except ImportError:
        pass
    return a == b
