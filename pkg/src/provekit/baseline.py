"""Extractive lower-bound baseline.

Ranks every document sentence by token overlap with the question,
copies the top-k verbatim, and tags each copied sentence with a single
Quotation triple pointing at its origin. Output is canonical by
construction, so it always parses strictly and validates cleanly, and
its pooled provenance precision against its own selection is 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

from provekit.corpus import DocumentSet
from provekit.errors import EmptyDocumentsError
from provekit.syntax import (
    AnnotatedAnswer,
    ProvenanceTriple,
    RelationType,
    build_answer,
)
from provekit.textseg import tokenize


@dataclass(frozen=True)
class BaselineConfig:
    top_k: int = 3

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")


DEFAULT_BASELINE = BaselineConfig()


def rank_sentences(question: str, docs: DocumentSet) -> list[tuple[int, int, int]]:
    """All (score, doc_id, sent_id) candidates, best first. Score is the
    size of the token-set overlap with the question; ties break toward
    lower doc id, then lower sentence id."""
    question_tokens = set(tokenize(question))
    scored = []
    for doc in docs.documents:
        for sent_id, sentence in enumerate(doc.sentences):
            overlap = len(question_tokens & set(tokenize(sentence)))
            scored.append((overlap, doc.doc_id, sent_id))
    scored.sort(key=lambda row: (-row[0], row[1], row[2]))
    return scored


def generate_extractive(
    question: str, docs: DocumentSet, config: BaselineConfig = DEFAULT_BASELINE
) -> AnnotatedAnswer:
    """Build a tagged extractive answer from the top-scoring sentences.

    top_k is clamped to the number of available sentences.
    """
    ranked = rank_sentences(question, docs)
    if not ranked:
        raise EmptyDocumentsError("document set holds no sentences")
    chosen = ranked[: min(config.top_k, len(ranked))]
    parts = []
    for _, doc_id, sent_id in chosen:
        sentence = docs.documents[doc_id].sentences[sent_id]
        parts.append(
            (sentence, [ProvenanceTriple(doc_id, sent_id, RelationType.QUOTATION)])
        )
    return build_answer(parts)
