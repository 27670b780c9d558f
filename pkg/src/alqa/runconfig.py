"""Declarative experiment configuration: one flat JSON file per run,
schema-validated up front with unknown keys rejected by path."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from alqa.acquisition import DropoutEnsembleConfig
from alqa.generator import GenInputLayout, GenTrainConfig
from alqa.loop import RecipeConfig
from alqa.reader import ReaderTrainConfig
from alqa.synthesis import SynthesisConfig


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(problems))
        self.problems = problems


_NUM = (int, float)

_CORPUS_SCHEMA = {
    "manifest": str,
    "path": str,
    "format": str,
    "domain": str,
}

SCHEMA = {
    "name": str,
    "seed": int,
    "output_dir": str,
    "dev_fraction": _NUM,
    "corpora": {"*": _CORPUS_SCHEMA},
    "backends": {
        "generator": {"backend": str, "checkpoint": str, "d_model": int,
                      "nhead": int, "num_layers": int, "ffn": int,
                      "dropout": _NUM, "max_positions": int, "seed": int,
                      "vocab_size": int},
        "reader": {"backend": str, "checkpoint": str, "d_model": int,
                   "nhead": int, "num_layers": int, "ffn": int,
                   "dropout": _NUM, "max_positions": int, "seed": int,
                   "vocab_size": int, "pretrained_decay": _NUM},
    },
    "layout": {"q_open": str, "q_close": str, "a_open": str, "a_close": str,
               "max_source_tokens": int, "max_question_tokens": int,
               "max_total_tokens": int, "question_truncation": int,
               "chunk_stride": int, "max_answer_tokens": int},
    "gen_train": {"epochs_source": int, "epochs_target": int,
                  "learning_rate": _NUM, "batch_size": int,
                  "warmup_fraction": _NUM, "early_stopping": bool,
                  "patience": int},
    "reader_train": {"learning_rate": _NUM, "batch_size": int,
                     "max_input_tokens": int, "stride": int,
                     "question_truncation": int, "max_answer_tokens": int,
                     "encoder_weight_decay_to_pretrained": _NUM,
                     "epochs": int},
    "synthesis": {"max_documents": int, "min_context_tokens": int,
                  "questions_per_context": int, "lm_filter_top_n": int,
                  "filter_mode": str, "lm_filter_scope": str},
    "recipe": {"placement": str, "iterations": int, "batch_size": int,
               "strategy": str, "filter_mode": str, "seed": int,
               "eval_each_iteration": bool},
    "ensemble": {"passes": int, "base_seed": int, "stochastic": bool},
    "decode": {"nucleus_p": _NUM, "top_k": int, "beam_size": int,
               "question_sampling": bool, "filter_order": str},
}


def _check(node, schema, path, problems):
    if not isinstance(node, dict):
        problems.append(f"{path or '<root>'}: expected an object")
        return
    for key, value in node.items():
        here = f"{path}.{key}" if path else key
        if "*" in schema:
            sub = schema["*"]
        elif key in schema:
            sub = schema[key]
        else:
            problems.append(f"{here}: unknown key")
            continue
        if isinstance(sub, dict):
            _check(value, sub, here, problems)
        elif sub is _NUM or isinstance(sub, tuple):
            if not isinstance(value, _NUM) or isinstance(value, bool):
                problems.append(f"{here}: expected a number")
        elif sub is bool:
            if not isinstance(value, bool):
                problems.append(f"{here}: expected a boolean")
        elif sub is int:
            if not isinstance(value, int) or isinstance(value, bool):
                problems.append(f"{here}: expected an integer")
        elif sub is str:
            if not isinstance(value, str):
                problems.append(f"{here}: expected a string")


def validate_config(data: dict) -> list[str]:
    problems: list[str] = []
    _check(data, SCHEMA, "", problems)
    return problems


class RunConfig:
    """Typed view over a validated config dict.

    Environment overrides: ALQA_OUTPUT_DIR and ALQA_SEED take precedence
    over the file's output_dir and seed.
    """

    def __init__(self, data: dict, base_dir: Path | None = None):
        problems = validate_config(data)
        if problems:
            raise ConfigError(problems)
        self.data = data
        self.base_dir = base_dir or Path.cwd()

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"{path}: {exc}"])
        return cls(data, base_dir=path.parent)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @property
    def seed(self) -> int:
        env = os.environ.get("ALQA_SEED")
        return int(env) if env else self.data.get("seed", 0)

    @property
    def output_dir(self) -> Path:
        env = os.environ.get("ALQA_OUTPUT_DIR")
        raw = env or self.data.get("output_dir", "runs/default")
        path = Path(raw)
        return path if path.is_absolute() else self.base_dir / path

    def corpus(self, name: str) -> dict:
        corpora = self.data.get("corpora", {})
        if name not in corpora:
            raise ConfigError([f"corpora.{name}: missing"])
        return corpora[name]

    def resolve(self, rel: str) -> Path:
        path = Path(rel)
        return path if path.is_absolute() else self.base_dir / path

    def layout(self) -> GenInputLayout:
        return GenInputLayout(**self.data.get("layout", {}))

    def gen_train(self) -> GenTrainConfig:
        return GenTrainConfig(**self.data.get("gen_train", {}))

    def reader_train(self) -> ReaderTrainConfig:
        return ReaderTrainConfig(**self.data.get("reader_train", {}))

    def synthesis(self) -> SynthesisConfig:
        return SynthesisConfig(**self.data.get("synthesis", {}))

    def recipe(self) -> RecipeConfig:
        section = dict(self.data.get("recipe", {}))
        section.setdefault("seed", self.seed)
        return RecipeConfig(**section)

    def ensemble(self) -> DropoutEnsembleConfig:
        section = dict(self.data.get("ensemble", {}))
        section.setdefault("base_seed", self.seed)
        return DropoutEnsembleConfig(**section)

    def decode_kwargs(self) -> dict:
        return dict(self.data.get("decode", {}))

    def backend_section(self, which: str) -> dict:
        return dict(self.data.get("backends", {}).get(which, {}))
