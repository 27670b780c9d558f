"""Data model, ingestion, tokenization, chunking and token-level answer metrics.

Everything downstream (generation, filtering, acquisition, evaluation) shares
the types and functions defined here. All operations are pure; character
spans are the source of truth and token spans are derived through tokenizer
offsets.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

PROVENANCES = ("human", "oracle", "synthetic")


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

class Tokenizer:
    """Minimal tokenizer contract: encode/decode plus character offsets.

    decode(encode(t)) must be a whitespace/casing-normalization equivalent
    of t, and offsets must be monotonically nondecreasing and in bounds.
    """

    tokenizer_id = "abstract"

    def encode(self, text: str) -> list[int]:
        raise NotImplementedError

    def decode(self, ids: list[int]) -> str:
        raise NotImplementedError

    def offsets(self, text: str) -> list[tuple[int, int]]:
        raise NotImplementedError

    def count(self, text: str) -> int:
        return len(self.offsets(text))


class WhitespaceTokenizer(Tokenizer):
    """Word-level tokenizer: tokens are maximal non-space runs.

    The vocabulary grows on demand until frozen; frozen tokenizers map
    unseen tokens to <unk> so trained model backends see a fixed id space.
    """

    PAD = "<pad>"
    UNK = "<unk>"

    tokenizer_id = "whitespace"

    def __init__(self, specials: tuple[str, ...] = ()):
        self._token_to_id: dict[str, int] = {}
        self._id_to_token: list[str] = []
        self.frozen = False
        for tok in (self.PAD, self.UNK, *specials):
            self.add_token(tok)

    @property
    def pad_id(self) -> int:
        return self._token_to_id[self.PAD]

    @property
    def unk_id(self) -> int:
        return self._token_to_id[self.UNK]

    def __len__(self) -> int:
        return len(self._id_to_token)

    def add_token(self, token: str) -> int:
        if token in self._token_to_id:
            return self._token_to_id[token]
        if self.frozen:
            return self.unk_id
        idx = len(self._id_to_token)
        self._token_to_id[token] = idx
        self._id_to_token.append(token)
        return idx

    def token_to_id(self, token: str) -> int:
        return self._token_to_id.get(token, self.unk_id)

    def id_to_token(self, idx: int) -> str:
        return self._id_to_token[idx]

    def fit(self, texts) -> "WhitespaceTokenizer":
        for text in texts:
            for tok in text.split():
                self.add_token(tok)
        return self

    def freeze(self) -> "WhitespaceTokenizer":
        self.frozen = True
        return self

    def encode(self, text: str) -> list[int]:
        return [self.add_token(tok) for tok in text.split()]

    def decode(self, ids: list[int]) -> str:
        pad = self.pad_id
        return " ".join(self._id_to_token[i] for i in ids if i != pad)

    def offsets(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in re.finditer(r"\S+", text)]

    def save(self, path: str | Path) -> None:
        payload = {"tokenizer_id": self.tokenizer_id, "tokens": self._id_to_token,
                   "frozen": self.frozen}
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path: str | Path) -> "WhitespaceTokenizer":
        payload = json.loads(Path(path).read_text())
        tok = cls()
        tok._token_to_id = {t: i for i, t in enumerate(payload["tokens"])}
        tok._id_to_token = list(payload["tokens"])
        tok.frozen = payload.get("frozen", False)
        return tok


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class Document:
    id: str
    text: str
    domain: str
    token_count: int

    @classmethod
    def build(cls, id: str, text: str, domain: str, tokenizer: Tokenizer) -> "Document":
        return cls(id=id, text=text, domain=domain, token_count=tokenizer.count(text))


@dataclass
class QASample:
    """A (context, question, answer-span) triple with provenance.

    The span invariant -- document text sliced at answer_char_span equals
    answer_text -- is checked at ingestion and before any persistence.
    Additional gold answer strings (BioASQ-style multi-answer samples) live
    in alt_answers and participate in max-over-golds metrics.
    """

    id: str
    document_id: str
    question: str
    answer_text: str
    answer_char_span: tuple[int, int]
    provenance: str
    domain: str
    alt_answers: tuple[str, ...] = ()

    def validate_against(self, document: Document) -> None:
        start, end = self.answer_char_span
        if not (0 <= start < end <= len(document.text)):
            raise SpanInvariantError(
                f"sample {self.id}: span ({start},{end}) out of bounds for "
                f"document of length {len(document.text)}")
        if document.text[start:end] != self.answer_text:
            raise SpanInvariantError(
                f"sample {self.id}: span mismatch, document slice "
                f"{document.text[start:end]!r} != answer {self.answer_text!r}")
        if self.provenance not in PROVENANCES:
            raise SpanInvariantError(f"sample {self.id}: bad provenance {self.provenance!r}")


@dataclass
class Chunk:
    """A sliding window over a parent document or sample context."""

    sample_or_document_id: str
    window_token_span: tuple[int, int]
    text: str
    char_span: tuple[int, int]
    contains_answer: bool | None = None


class SpanInvariantError(ValueError):
    pass


class IngestError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Answer normalization and token-level metrics
# ---------------------------------------------------------------------------

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, strip articles, collapse whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def token_f1(prediction: str, gold: str) -> float:
    """Token-level F1 over normalized token multisets."""
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def exact_match(prediction: str, gold: str) -> bool:
    return normalize_answer(prediction) == normalize_answer(gold)


def max_over_golds(metric_fn, prediction: str, golds) -> float:
    """MRQA convention: a prediction scores the max over all gold answers."""
    return max(float(metric_fn(prediction, g)) for g in golds)


def sample_gold_answers(sample: QASample) -> list[str]:
    return [sample.answer_text, *sample.alt_answers]


# ---------------------------------------------------------------------------
# Context chunking
# ---------------------------------------------------------------------------

def chunk_context(
    doc: Document,
    max_tokens: int,
    stride: int,
    tokenizer: Tokenizer,
    answer_span: tuple[int, int] | None = None,
) -> list[Chunk]:
    """Split a document into overlapping token windows.

    Windows advance by (max_tokens - stride) so consecutive windows overlap
    by exactly `stride` tokens; the last window may be shorter. When
    answer_span (character offsets) is given, contains_answer marks windows
    holding the full answer.
    """
    if stride >= max_tokens:
        raise ValueError(f"stride {stride} must be < max_tokens {max_tokens}")
    offs = tokenizer.offsets(doc.text)
    n = len(offs)
    if n == 0:
        return []

    ans_tok_range = None
    if answer_span is not None:
        a_start, a_end = answer_span
        covered = [i for i, (s, e) in enumerate(offs) if s < a_end and e > a_start]
        if covered:
            ans_tok_range = (covered[0], covered[-1] + 1)

    chunks = []
    start = 0
    step = max_tokens - stride
    while True:
        end = min(start + max_tokens, n)
        char_start = offs[start][0]
        char_end = offs[end - 1][1]
        contains = None
        if answer_span is not None:
            contains = (ans_tok_range is not None
                        and start <= ans_tok_range[0]
                        and ans_tok_range[1] <= end)
        chunks.append(Chunk(
            sample_or_document_id=doc.id,
            window_token_span=(start, end),
            text=doc.text[char_start:char_end],
            char_span=(char_start, char_end),
            contains_answer=contains,
        ))
        if start + max_tokens >= n:
            break
        start += step
    return chunks


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

@dataclass
class IngestResult:
    documents: list[Document]
    samples: list[QASample]
    rejected: list[tuple[str, str]] = field(default_factory=list)

    @property
    def counts(self) -> dict:
        return {
            "documents": len(self.documents),
            "samples": len(self.samples),
            "rejected": len(self.rejected),
        }


FORMATS = ("mrqa_jsonl", "squad_json", "native_jsonl")

MAX_REJECT_FRACTION = 0.10


def _text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class _DocDedup:
    """Deduplicates documents by text hash, preserving first-seen ids."""

    def __init__(self, tokenizer: Tokenizer, domain: str):
        self.tokenizer = tokenizer
        self.domain = domain
        self.by_hash: dict[str, Document] = {}
        self.docs: list[Document] = []

    def add(self, doc_id: str, text: str) -> Document:
        h = _text_hash(text)
        if h in self.by_hash:
            return self.by_hash[h]
        doc = Document.build(doc_id, text, self.domain, self.tokenizer)
        self.by_hash[h] = doc
        self.docs.append(doc)
        return doc


def ingest_dataset(
    path: str | Path,
    format: str,
    tokenizer: Tokenizer | None = None,
    domain: str | None = None,
) -> IngestResult:
    """Parse a dataset file into Documents and span-validated QASamples.

    Malformed records are rejected individually with a reason; ingestion
    aborts only when more than 10% of records are rejected. Documents are
    deduplicated by text hash.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    if format not in FORMATS:
        raise IngestError(f"unknown format {format!r}, expected one of {FORMATS}")
    tokenizer = tokenizer or WhitespaceTokenizer()
    domain = domain or path.stem

    if format == "squad_json":
        result = _ingest_squad(path, tokenizer, domain)
    elif format == "mrqa_jsonl":
        result = _ingest_mrqa(path, tokenizer, domain)
    else:
        result = _ingest_native(path, tokenizer, domain)

    total = len(result.samples) + len(result.rejected)
    if total and len(result.rejected) / total > MAX_REJECT_FRACTION:
        raise IngestError(
            f"{len(result.rejected)}/{total} records rejected "
            f"(> {MAX_REJECT_FRACTION:.0%}); first: {result.rejected[0]}")
    log.info("ingested %s: %s", path.name, result.counts)
    return result


def _validated_sample(sample: QASample, doc: Document,
                      result: IngestResult) -> None:
    try:
        sample.validate_against(doc)
    except SpanInvariantError as exc:
        result.rejected.append((sample.id, f"span mismatch: {exc}"))
        return
    result.samples.append(sample)


def _ingest_squad(path: Path, tokenizer: Tokenizer, domain: str) -> IngestResult:
    try:
        data = json.loads(path.read_text())["data"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise IngestError(f"{path}: not a SQuAD v1.1 file ({exc})")
    dedup = _DocDedup(tokenizer, domain)
    result = IngestResult(documents=dedup.docs, samples=[])
    for ai, article in enumerate(data):
        for pi, para in enumerate(article.get("paragraphs", [])):
            context = para.get("context")
            if not context:
                result.rejected.append((f"article{ai}/para{pi}", "missing context"))
                continue
            doc = dedup.add(f"{domain}-{ai:04d}-{pi:03d}", context)
            for qa in para.get("qas", []):
                qid = str(qa.get("id", f"{doc.id}-q{len(result.samples)}"))
                answers = qa.get("answers") or []
                if not qa.get("question") or not answers:
                    result.rejected.append((qid, "missing question or answers"))
                    continue
                first = answers[0]
                start = first.get("answer_start", -1)
                text = first.get("text", "")
                alts = tuple(dict.fromkeys(
                    a["text"] for a in answers[1:] if a.get("text")))
                sample = QASample(
                    id=qid, document_id=doc.id, question=qa["question"],
                    answer_text=text, answer_char_span=(start, start + len(text)),
                    provenance="human", domain=domain, alt_answers=alts)
                _validated_sample(sample, doc, result)
    return result


def _ingest_mrqa(path: Path, tokenizer: Tokenizer, domain: str) -> IngestResult:
    dedup = _DocDedup(tokenizer, domain)
    result = IngestResult(documents=dedup.docs, samples=[])
    with path.open() as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                result.rejected.append((f"line{i}", "invalid json"))
                continue
            if i == 0 and "header" in record:
                continue
            context = record.get("context")
            if not context:
                result.rejected.append((f"line{i}", "missing context"))
                continue
            doc = dedup.add(f"{domain}-ctx{i:06d}", context)
            for qa in record.get("qas", []):
                qid = str(qa.get("qid") or qa.get("id") or f"{doc.id}-q")
                detected = qa.get("detected_answers") or []
                if not qa.get("question") or not detected:
                    result.rejected.append((qid, "missing question or detected_answers"))
                    continue
                first = detected[0]
                spans = first.get("char_spans") or []
                if not spans:
                    result.rejected.append((qid, "missing char_spans"))
                    continue
                # MRQA char spans are inclusive; ours are end-exclusive.
                start, end_incl = spans[0]
                alts = tuple(dict.fromkeys(
                    a for a in (qa.get("answers") or []) if a)) or ()
                answer_text = context[start:end_incl + 1]
                alts = tuple(a for a in alts if a != answer_text)
                sample = QASample(
                    id=qid, document_id=doc.id, question=qa["question"],
                    answer_text=first.get("text", answer_text),
                    answer_char_span=(start, end_incl + 1),
                    provenance="human", domain=domain, alt_answers=alts)
                _validated_sample(sample, doc, result)
    return result


def _ingest_native(path: Path, tokenizer: Tokenizer, domain: str) -> IngestResult:
    """Native corpora are manifest-driven: a JSON file pointing at a
    documents JSONL and a samples JSONL."""
    try:
        manifest = json.loads(path.read_text())
        documents_path = path.parent / manifest["documents_path"]
        samples_path = path.parent / manifest["samples_path"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise IngestError(f"{path}: not a corpus manifest ({exc})")
    domain = manifest.get("domain", domain)
    docs = load_documents(documents_path, tokenizer, domain)
    by_id = {d.id: d for d in docs}
    result = IngestResult(documents=docs, samples=[])
    for i, record in enumerate(_iter_jsonl(samples_path)):
        if record is None:
            result.rejected.append((f"line{i}", "invalid json"))
            continue
        try:
            sample = sample_from_dict(record)
        except (KeyError, TypeError, ValueError) as exc:
            result.rejected.append((f"line{i}", f"malformed record: {exc}"))
            continue
        doc = by_id.get(sample.document_id)
        if doc is None:
            result.rejected.append((sample.id, f"unknown document {sample.document_id}"))
            continue
        _validated_sample(sample, doc, result)
    return result


def _iter_jsonl(path: Path):
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                yield None


# ---------------------------------------------------------------------------
# Native persistence
# ---------------------------------------------------------------------------

def sample_to_dict(sample: QASample) -> dict:
    record = {
        "id": sample.id,
        "document_id": sample.document_id,
        "question": sample.question,
        "answer_text": sample.answer_text,
        "answer_start": sample.answer_char_span[0],
        "answer_end": sample.answer_char_span[1],
        "provenance": sample.provenance,
        "domain": sample.domain,
    }
    if sample.alt_answers:
        record["alt_answers"] = list(sample.alt_answers)
    return record


def sample_from_dict(record: dict) -> QASample:
    return QASample(
        id=str(record["id"]),
        document_id=str(record["document_id"]),
        question=record["question"],
        answer_text=record["answer_text"],
        answer_char_span=(int(record["answer_start"]), int(record["answer_end"])),
        provenance=record["provenance"],
        domain=record.get("domain", ""),
        alt_answers=tuple(record.get("alt_answers", ())),
    )


def write_samples(samples, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_dict(s)) + "\n")


def load_samples(path: str | Path) -> list[QASample]:
    out = []
    for record in _iter_jsonl(Path(path)):
        if record is not None:
            out.append(sample_from_dict(record))
    return out


def write_documents(documents, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for d in documents:
            fh.write(json.dumps({"id": d.id, "text": d.text, "domain": d.domain}) + "\n")


def load_documents(path: str | Path, tokenizer: Tokenizer,
                   domain: str | None = None) -> list[Document]:
    docs = []
    for record in _iter_jsonl(Path(path)):
        if record is None:
            continue
        docs.append(Document.build(
            str(record["id"]), record["text"],
            record.get("domain", domain or ""), tokenizer))
    return docs


def write_manifest(path: str | Path, name: str, domain: str,
                   documents_path: str, samples_path: str,
                   tokenizer_id: str, counts: dict) -> None:
    Path(path).write_text(json.dumps({
        "name": name,
        "domain": domain,
        "documents_path": documents_path,
        "samples_path": samples_path,
        "tokenizer_id": tokenizer_id,
        "counts": counts,
    }, indent=2))
