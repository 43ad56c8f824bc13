"""Corpus schema, JSONL I/O, and descriptive statistics.

Instances live one-per-line as JSON objects::

    {"id": "...", "question": "...", "documents": [["sent", ...], ...],
     "reference": "..."}

where ``documents`` is a list of documents, each a list of pre-split
sentences, and ``reference`` is a canonical provenance-annotated answer.
Predictions are ``{"id": "...", "output": "..."}`` rows keyed to the
same ids. References are parsed strictly at load time and every triple
must resolve against the instance's documents.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from provekit.errors import (
    EmptyCorpusError,
    IndexOutOfRangeError,
    ParseError,
    SchemaError,
)
from provekit.syntax import (
    AnnotatedAnswer,
    ProvenanceTriple,
    RelationType,
    parse_annotated,
    strip_tags,
)
from provekit.textseg import tokenize


@dataclass(frozen=True)
class Document:
    """One source document as an ordered list of sentences."""

    doc_id: int
    sentences: tuple[str, ...]

    def __post_init__(self):
        if self.doc_id < 0:
            raise ValueError("doc_id must be non-negative")
        if not self.sentences or any(not s for s in self.sentences):
            raise ValueError("documents need at least one non-empty sentence")


@dataclass(frozen=True)
class DocumentSet:
    """The documents backing one instance, ids contiguous from zero."""

    documents: tuple[Document, ...]

    @classmethod
    def from_lists(cls, lists: Sequence[Sequence[str]]) -> "DocumentSet":
        return cls(
            tuple(Document(i, tuple(sents)) for i, sents in enumerate(lists))
        )

    def contains(self, doc_id: int, sent_id: int) -> bool:
        return (
            0 <= doc_id < len(self.documents)
            and 0 <= sent_id < len(self.documents[doc_id].sentences)
        )

    def resolve(self, triple: ProvenanceTriple) -> str:
        """The source sentence a triple points at."""
        if not self.contains(triple.doc_id, triple.sent_id):
            raise IndexOutOfRangeError(triple.doc_id, triple.sent_id)
        return self.documents[triple.doc_id].sentences[triple.sent_id]

    def as_lists(self) -> list[list[str]]:
        return [list(d.sentences) for d in self.documents]


@dataclass(frozen=True)
class Instance:
    id: str
    question: str
    documents: DocumentSet
    reference: str


@dataclass(frozen=True)
class Prediction:
    id: str
    output: str


def _require(obj: dict, key: str, kind, line: int):
    if key not in obj:
        raise SchemaError(line, key, "missing field")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError(line, key, f"expected {kind.__name__}")
    return value


def _check_reference(reference: str, docs: DocumentSet, line: int) -> AnnotatedAnswer:
    try:
        answer = parse_annotated(reference, mode="strict")
    except ParseError as exc:
        raise SchemaError(line, "reference", f"not strictly parseable: {exc.reason}")
    for triple in answer.all_triples():
        if not docs.contains(triple.doc_id, triple.sent_id):
            raise SchemaError(
                line,
                "reference",
                f"triple ({triple.doc_id},{triple.sent_id}) does not resolve",
            )
    return answer


def instance_from_dict(obj: dict, line: int = 0) -> Instance:
    """Build and validate one Instance from a decoded JSON object."""
    id_ = _require(obj, "id", str, line)
    question = _require(obj, "question", str, line)
    raw_docs = _require(obj, "documents", list, line)
    reference = _require(obj, "reference", str, line)
    for d in raw_docs:
        if not isinstance(d, list) or not all(isinstance(s, str) and s for s in d):
            raise SchemaError(line, "documents", "each document is a list of non-empty strings")
    if not raw_docs:
        raise SchemaError(line, "documents", "at least one document required")
    try:
        docs = DocumentSet.from_lists(raw_docs)
    except ValueError as exc:
        raise SchemaError(line, "documents", str(exc))
    _check_reference(reference, docs, line)
    return Instance(id_, question, docs, reference)


def load_instances(path: str | Path) -> list[Instance]:
    """Read an instances JSONL file; malformed lines raise SchemaError
    with their 1-based line number."""
    instances = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(line_no, None, f"invalid JSON: {exc.msg}")
            if not isinstance(obj, dict):
                raise SchemaError(line_no, None, "each line must be a JSON object")
            instances.append(instance_from_dict(obj, line_no))
    return instances


def load_predictions(path: str | Path) -> list[Prediction]:
    predictions = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(line_no, None, f"invalid JSON: {exc.msg}")
            if not isinstance(obj, dict):
                raise SchemaError(line_no, None, "each line must be a JSON object")
            predictions.append(
                Prediction(
                    _require(obj, "id", str, line_no),
                    _require(obj, "output", str, line_no),
                )
            )
    return predictions


def save_instances(instances: Iterable[Instance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(
                json.dumps(
                    {
                        "id": inst.id,
                        "question": inst.question,
                        "documents": inst.documents.as_lists(),
                        "reference": inst.reference,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def save_predictions(predictions: Iterable[Prediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(
                json.dumps({"id": pred.id, "output": pred.output}, ensure_ascii=False)
                + "\n"
            )


# --------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class StatSummary:
    """Average, median, min, and max of one distribution."""

    avg: float
    median: float
    min: float
    max: float

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "StatSummary":
        if not values:
            raise EmptyCorpusError("no values to summarize")
        return cls(
            avg=sum(values) / len(values),
            median=float(statistics.median(values)),
            min=float(min(values)),
            max=float(max(values)),
        )


@dataclass(frozen=True)
class CorpusStats:
    total_answers: int
    total_tags: int
    total_triples: int
    tags_per_answer: StatSummary
    triples_per_answer: StatSummary
    triples_per_tag: StatSummary
    answer_words: StatSummary
    doc_sentences: StatSummary
    doc_words: StatSummary
    relation_counts: dict[RelationType, int] = field(default_factory=dict)


def compute_stats(instances: Sequence[Instance]) -> CorpusStats:
    """Descriptive statistics over reference answers and documents."""
    if not instances:
        raise EmptyCorpusError("no instances")

    tags_per_answer: list[int] = []
    triples_per_answer: list[int] = []
    triples_per_tag: list[int] = []
    answer_words: list[int] = []
    doc_sentences: list[int] = []
    doc_words: list[int] = []
    relation_counts = {r: 0 for r in RelationType}

    for inst in instances:
        answer = parse_annotated(inst.reference, mode="strict")
        tags = [seg.tag for seg in answer.segments if seg.tag is not None]
        tags += [det.tag for det in answer.detached]
        tags_per_answer.append(len(tags))
        n_triples = 0
        for tag in tags:
            triples_per_tag.append(len(tag.triples))
            n_triples += len(tag.triples)
            for t in tag.triples:
                relation_counts[t.relation] += 1
        triples_per_answer.append(n_triples)
        answer_words.append(len(tokenize(strip_tags(inst.reference))))
        for doc in inst.documents.documents:
            doc_sentences.append(len(doc.sentences))
            doc_words.append(sum(len(tokenize(s)) for s in doc.sentences))

    return CorpusStats(
        total_answers=len(instances),
        total_tags=sum(tags_per_answer),
        total_triples=sum(triples_per_answer),
        tags_per_answer=StatSummary.from_values(tags_per_answer),
        triples_per_answer=StatSummary.from_values(triples_per_answer),
        triples_per_tag=StatSummary.from_values(triples_per_tag),
        answer_words=StatSummary.from_values(answer_words),
        doc_sentences=StatSummary.from_values(doc_sentences),
        doc_words=StatSummary.from_values(doc_words),
        relation_counts=relation_counts,
    )
