import random
from dataclasses import dataclass, field

import pytest
import torch

from alqa.backends.tiny_gen import TinyGenBackend
from alqa.backends.tiny_reader import TinyReaderBackend
from alqa.corpus import Document, QASample, WhitespaceTokenizer
from alqa.generator import GenInputLayout, GenTrainConfig, build_training_pairs, train_generator
from alqa.reader import ReaderTrainConfig, train_reader

torch.set_num_threads(2)

KEYS = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa",
    "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
    "xray", "yankee", "zulu",
]
VALUES = ["red", "blue", "green", "gold", "gray", "pink", "teal", "cyan",
          "plum", "rust", "jade", "ivory"]

SOURCE_NOUN = "code"
TARGET_NOUN = "tag"


def make_doc_text(facts, noun):
    return " ".join(f"the {noun} for {k} is {v} ." for k, v in facts)


def make_question(key, noun):
    return f"what is the {noun} for {key} ?"


@dataclass
class ToyWorld:
    """A synthetic key-value QA corpus split into a source and a target
    domain that differ only in the relation noun."""

    documents: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    tokenizer: WhitespaceTokenizer = None
    layout: GenInputLayout = None

    @property
    def documents_by_id(self):
        return {d.id: d for d in self.documents}

    def split(self, domain):
        docs = [d for d in self.documents if d.domain == domain]
        samples = [s for s in self.samples if s.domain == domain]
        return docs, samples


def build_toy_world(n_source=60, n_target=80, facts_per_doc=3, seed=13,
                    questions_per_doc=1):
    layout = GenInputLayout(max_source_tokens=64, max_question_tokens=24,
                            max_total_tokens=96, chunk_stride=16,
                            max_answer_tokens=8)
    tokenizer = WhitespaceTokenizer(specials=layout.specials)
    world = ToyWorld(tokenizer=tokenizer, layout=layout)
    rng = random.Random(seed)

    def add_domain(domain, noun, count, offset):
        for i in range(count):
            keys = rng.sample(KEYS, facts_per_doc)
            values = rng.sample(VALUES, facts_per_doc)
            facts = list(zip(keys, values))
            text = make_doc_text(facts, noun)
            doc = Document.build(f"{domain}-d{offset + i:04d}", text, domain, tokenizer)
            world.documents.append(doc)
            for qi in range(questions_per_doc):
                key, value = facts[qi % facts_per_doc]
                anchor = f"for {key} is "
                start = text.index(anchor) + len(anchor)
                world.samples.append(QASample(
                    id=f"{domain}-s{offset + i:04d}-{qi}",
                    document_id=doc.id,
                    question=make_question(key, noun),
                    answer_text=value,
                    answer_char_span=(start, start + len(value)),
                    provenance="oracle",
                    domain=domain,
                ))

    add_domain("toysrc", SOURCE_NOUN, n_source, 0)
    add_domain("toytgt", TARGET_NOUN, n_target, n_source)
    tokenizer.fit([d.text for d in world.documents])
    tokenizer.fit([s.question for s in world.samples])
    tokenizer.freeze()
    return world


@pytest.fixture(scope="session")
def toy_world():
    return build_toy_world()


def train_toy_generator(world, epochs=20, seed=0):
    docs = world.documents_by_id
    pairs = []
    for sample in (s for s in world.samples if s.domain == "toysrc"):
        pairs.extend(build_training_pairs(sample, docs[sample.document_id],
                                          world.layout, world.tokenizer))
    dev = pairs[:8]
    backend = TinyGenBackend(vocab_size=len(world.tokenizer), d_model=48,
                             ffn=96, max_positions=128, seed=seed)
    cfg = GenTrainConfig(learning_rate=3e-3, batch_size=16, warmup_fraction=0.1)
    train_generator(backend, pairs, cfg, dev, epochs=epochs, seed=seed)
    return backend


def train_toy_reader(world, domain="toytgt", epochs=10, seed=0):
    docs = world.documents_by_id
    samples = [s for s in world.samples if s.domain == domain]
    split = max(1, len(samples) // 5)
    dev, train = samples[:split], samples[split:]
    backend = TinyReaderBackend(vocab_size=len(world.tokenizer), d_model=48,
                                ffn=96, max_positions=128, seed=seed)
    cfg = ReaderTrainConfig(learning_rate=3e-3, batch_size=16,
                            max_input_tokens=64, stride=16,
                            max_answer_tokens=4, epochs=epochs)
    train_reader(backend, train, cfg, dev, docs, world.tokenizer, seed=seed)
    return backend, cfg, dev


@pytest.fixture(scope="session")
def _trained_gen_core(toy_world):
    backend = train_toy_generator(toy_world)
    return backend, backend.get_state()


@pytest.fixture
def trained_gen(_trained_gen_core):
    backend, base_state = _trained_gen_core
    backend.set_state(base_state)
    backend.set_stochastic(False)
    return backend


@pytest.fixture(scope="session")
def _trained_reader_core(toy_world):
    backend, cfg, dev = train_toy_reader(toy_world)
    return backend, backend.get_state(), cfg, dev


@pytest.fixture
def trained_reader(_trained_reader_core):
    backend, base_state, cfg, dev = _trained_reader_core
    backend.set_state(base_state)
    backend.set_stochastic(False)
    return backend, cfg, dev
