"""Grammar, parser, serializer, and validator for provenance tags.

An annotated answer interleaves sentence text with bracketed provenance
tags. The canonical form is::

    Sentence text. [PROVE: ("0","0","Quotation"), ("2","0","Compression")]

Each tag holds one or more triples (doc index, sentence index, relation)
with zero-based, double-quoted decimal indices and exact-case relation
names, and binds to the sentence immediately before it. Strict parsing
accepts only that triple syntax; lenient parsing additionally accepts
single quotes, ``d``/``s`` index prefixes, unquoted integers, and
case-insensitive relation names, normalizing everything to canonical
form. Lenient parsing records recoverable problems as issues on the
answer instead of raising, so the validator can re-report them.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Optional, Sequence

from provekit.errors import ParseError
from provekit.textseg import TAG_OPEN, split_sentences_spans

logger = logging.getLogger(__name__)

ParseMode = Literal["strict", "lenient"]


class RelationType(str, Enum):
    """How an answer sentence relates to the source sentence it cites."""

    QUOTATION = "Quotation"
    COMPRESSION = "Compression"
    INFERENCE = "Inference"


_RELATION_BY_LOWER = {r.value.lower(): r for r in RelationType}
_RELATION_NAMES = frozenset(r.value for r in RelationType)


@dataclass(frozen=True, order=True)
class ProvenanceTriple:
    """One citation: zero-based doc and sentence indices plus a relation."""

    doc_id: int
    sent_id: int
    relation: RelationType

    def __post_init__(self):
        if self.doc_id < 0 or self.sent_id < 0:
            raise ValueError("indices must be non-negative")


class ProveTag:
    """A non-empty set of provenance triples attached to one sentence.

    Source order is preserved for serialization, but equality and
    hashing use set semantics: two tags with the same triples in any
    order are equal.
    """

    __slots__ = ("triples",)

    def __init__(self, triples: Sequence[ProvenanceTriple]):
        if not triples:
            raise ValueError("a provenance tag needs at least one triple")
        self.triples: tuple[ProvenanceTriple, ...] = tuple(triples)

    def __eq__(self, other):
        if not isinstance(other, ProveTag):
            return NotImplemented
        return frozenset(self.triples) == frozenset(other.triples)

    def __hash__(self):
        return hash(frozenset(self.triples))

    def __repr__(self):
        return f"ProveTag({list(self.triples)!r})"


class ViolationKind(str, Enum):
    MISSING_TAG = "MissingTag"
    SPLIT_TAGS = "SplitTags"
    INDEX_OUT_OF_RANGE = "IndexOutOfRange"
    MALFORMED_TUPLE = "MalformedTuple"
    UNKNOWN_RELATION = "UnknownRelation"
    EMPTY_TAG = "EmptyTag"
    DUPLICATE_TRIPLE = "DuplicateTriple"


@dataclass(frozen=True)
class ParseIssue:
    """A recoverable problem recorded during lenient parsing."""

    kind: ViolationKind
    segment_index: Optional[int]
    position: int
    detail: str


@dataclass(frozen=True)
class AnnotatedSegment:
    """One sentence unit with its tag (if any) and source span."""

    text: str
    tag: Optional[ProveTag]
    char_span: tuple[int, int]


@dataclass(frozen=True)
class DetachedTag:
    """A tag with no sentence of its own, e.g. the second of two
    adjacent tags. ``after_segment`` is the index of the segment it
    trails, or None when it appears before any text."""

    tag: ProveTag
    char_span: tuple[int, int]
    after_segment: Optional[int]


@dataclass(frozen=True)
class AnnotatedAnswer:
    """Parsed answer: sentence segments plus structural leftovers."""

    segments: tuple[AnnotatedSegment, ...]
    source_text: str
    detached: tuple[DetachedTag, ...] = ()
    parse_issues: tuple[ParseIssue, ...] = ()

    def all_triples(self) -> set[ProvenanceTriple]:
        """Union of every triple in the answer, detached tags included."""
        pool: set[ProvenanceTriple] = set()
        for seg in self.segments:
            if seg.tag is not None:
                pool.update(seg.tag.triples)
        for det in self.detached:
            pool.update(det.tag.triples)
        return pool


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    segment_index: Optional[int]
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...]
    warnings: tuple[Violation, ...] = ()

    def kinds(self) -> set[ViolationKind]:
        return {v.kind for v in self.violations} | {w.kind for w in self.warnings}


DEFAULT_TRANSITION_PHRASES = (
    "to summarize",
    "in conclusion",
    "in summary",
    "overall",
)


@dataclass(frozen=True)
class ValidationPolicy:
    """Knobs for tag-completeness checking.

    Sentences that open with a transition phrase (case-insensitive
    prefix match) are treated as non-factual connectors and exempt from
    the tag requirement.
    """

    require_tags: bool = True
    transition_phrases: tuple[str, ...] = DEFAULT_TRANSITION_PHRASES

    def is_exempt(self, sentence: str) -> bool:
        lowered = sentence.strip().lower()
        return any(lowered.startswith(p) for p in self.transition_phrases)


DEFAULT_POLICY = ValidationPolicy()

# --------------------------------------------------------------------------
# parsing

_STRICT_FIELD = re.compile(r'^"([^"]*)"$')
_LENIENT_IDX = re.compile(r"^['\"]?\s*[dDsS]?(\d+)\s*['\"]?$")
_LENIENT_REL = re.compile(r"^['\"]?\s*([A-Za-z]+)\s*['\"]?$")
_GROUP_RE = re.compile(r"\(([^()]*)\)")

_RawIssue = tuple[ViolationKind, int, str]


@dataclass(frozen=True)
class _RawTag:
    start: int
    end: int
    triples: tuple[ProvenanceTriple, ...]
    issues: tuple[_RawIssue, ...]


def _parse_strict_triple(group: str, pos: int) -> ProvenanceTriple:
    fields = [f.strip() for f in group.split(",")]
    if len(fields) != 3:
        raise ParseError(pos, f"tuple must have exactly three fields, got {len(fields)}")
    parts = []
    for f in fields[:2]:
        m = _STRICT_FIELD.match(f)
        if m is None:
            raise ParseError(pos, f"index must be a double-quoted decimal, got {f!r}")
        if not m.group(1).isdigit():
            raise ParseError(pos, f"non-numeric index {m.group(1)!r}")
        parts.append(int(m.group(1)))
    m = _STRICT_FIELD.match(fields[2])
    if m is None:
        raise ParseError(pos, f"relation must be double-quoted, got {fields[2]!r}")
    name = m.group(1)
    if name not in _RELATION_NAMES:
        raise ParseError(pos, f"unknown relation {name!r}")
    return ProvenanceTriple(parts[0], parts[1], RelationType(name))


def _parse_lenient_triple(
    group: str, pos: int, issues: list[_RawIssue]
) -> Optional[ProvenanceTriple]:
    fields = [f.strip() for f in group.split(",")]
    if len(fields) != 3:
        issues.append(
            (
                ViolationKind.MALFORMED_TUPLE,
                pos,
                f"tuple must have exactly three fields, got {len(fields)}",
            )
        )
        return None
    parts = []
    for f in fields[:2]:
        m = _LENIENT_IDX.match(f)
        if m is None:
            issues.append(
                (ViolationKind.MALFORMED_TUPLE, pos, f"unreadable index {f!r}")
            )
            return None
        parts.append(int(m.group(1)))
    m = _LENIENT_REL.match(fields[2])
    if m is None:
        issues.append(
            (ViolationKind.MALFORMED_TUPLE, pos, f"unreadable relation {fields[2]!r}")
        )
        return None
    relation = _RELATION_BY_LOWER.get(m.group(1).lower())
    if relation is None:
        issues.append(
            (ViolationKind.UNKNOWN_RELATION, pos, f"unknown relation {fields[2]!r}")
        )
        return None
    return ProvenanceTriple(parts[0], parts[1], relation)


def _parse_tag_body(inner: str, pos: int, mode: ParseMode) -> tuple[
    tuple[ProvenanceTriple, ...], tuple[_RawIssue, ...]
]:
    issues: list[_RawIssue] = []
    groups = list(_GROUP_RE.finditer(inner))
    if not groups:
        if inner.strip() == "":
            if mode == "strict":
                raise ParseError(pos, "empty tag: no provenance triples")
            issues.append((ViolationKind.EMPTY_TAG, pos, "tag holds no triples"))
        else:
            if mode == "strict":
                raise ParseError(pos, f"malformed tag content {inner.strip()!r}")
            issues.append(
                (
                    ViolationKind.MALFORMED_TUPLE,
                    pos,
                    f"no parsable tuples in {inner.strip()!r}",
                )
            )
        return (), tuple(issues)

    if mode == "strict":
        leftover = _GROUP_RE.sub("", inner)
        if leftover.strip(" \t\r\n,"):
            raise ParseError(pos, f"unexpected tag content {leftover.strip()!r}")

    triples: list[ProvenanceTriple] = []
    seen: set[ProvenanceTriple] = set()
    for g in groups:
        if mode == "strict":
            triple = _parse_strict_triple(g.group(1), pos + g.start())
        else:
            triple = _parse_lenient_triple(g.group(1), pos + g.start(), issues)
            if triple is None:
                continue
        if triple in seen:
            issues.append(
                (
                    ViolationKind.DUPLICATE_TRIPLE,
                    pos + g.start(),
                    f"duplicate triple {_render_triple(triple)}",
                )
            )
            continue
        seen.add(triple)
        triples.append(triple)
    return tuple(triples), tuple(issues)


def _scan_tags(text: str, mode: ParseMode) -> list[_RawTag]:
    tags: list[_RawTag] = []
    i = 0
    while True:
        i = text.find(TAG_OPEN, i)
        if i < 0:
            return tags
        close = text.find("]", i)
        if close < 0:
            raise ParseError(i, "unclosed provenance tag")
        inner = text[i + len(TAG_OPEN) : close]
        triples, issues = _parse_tag_body(inner, i + len(TAG_OPEN), mode)
        tags.append(_RawTag(i, close + 1, triples, issues))
        i = close + 1


def parse_annotated(text: str, mode: ParseMode = "strict") -> AnnotatedAnswer:
    """Parse annotated text into sentence segments with bound tags.

    Every well-formed tag binds to the sentence immediately before it;
    a tag with no preceding sentence (or following another tag with no
    text in between) is kept as a detached tag for the validator. In
    lenient mode, unreadable triples are dropped and recorded as parse
    issues; strict mode raises ParseError instead.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown parse mode {mode!r}")
    raw_tags = _scan_tags(text, mode)

    segments: list[AnnotatedSegment] = []
    detached: list[DetachedTag] = []
    issues: list[ParseIssue] = []
    pos = 0
    for raw in raw_tags:
        chunk = text[pos : raw.start]
        sents = split_sentences_spans(chunk)
        for s, a, b in sents[:-1]:
            segments.append(AnnotatedSegment(s, None, (pos + a, pos + b)))
        tag = ProveTag(raw.triples) if raw.triples else None
        if sents:
            s, a, b = sents[-1]
            seg_index: Optional[int] = len(segments)
            segments.append(AnnotatedSegment(s, tag, (pos + a, pos + b)))
        else:
            seg_index = None
            if tag is not None:
                after = len(segments) - 1 if segments else None
                detached.append(DetachedTag(tag, (raw.start, raw.end), after))
        for kind, at, det in raw.issues:
            issues.append(ParseIssue(kind, seg_index, at, det))
        pos = raw.end
    for s, a, b in split_sentences_spans(text[pos:]):
        segments.append(AnnotatedSegment(s, None, (pos + a, pos + b)))

    return AnnotatedAnswer(tuple(segments), text, tuple(detached), tuple(issues))


# --------------------------------------------------------------------------
# serialization

def _render_triple(t: ProvenanceTriple) -> str:
    return f'("{t.doc_id}","{t.sent_id}","{t.relation.value}")'


def _render_tag(tag: ProveTag) -> str:
    return f"[PROVE: {', '.join(_render_triple(t) for t in tag.triples)}]"


def serialize(answer: AnnotatedAnswer) -> str:
    """Canonical string form: segments joined by single spaces, each tag
    one space after its sentence. Detached tags are re-emitted in place
    so structural problems survive a parse/serialize cycle."""
    if not answer.segments and not answer.detached:
        raise ValueError("cannot serialize an answer with no segments")
    trailing: dict[Optional[int], list[DetachedTag]] = defaultdict(list)
    for det in answer.detached:
        trailing[det.after_segment].append(det)
    parts: list[str] = [_render_tag(d.tag) for d in trailing.get(None, [])]
    for idx, seg in enumerate(answer.segments):
        parts.append(seg.text)
        if seg.tag is not None:
            parts.append(_render_tag(seg.tag))
        for det in trailing.get(idx, []):
            parts.append(_render_tag(det.tag))
    return " ".join(parts)


def build_answer(
    parts: Sequence[tuple[str, Optional[Sequence[ProvenanceTriple]]]],
) -> AnnotatedAnswer:
    """Construct a canonical answer from (sentence, triples-or-None)
    pairs by serializing and re-parsing strictly, so spans and structure
    are always consistent with the parser's view."""
    rendered: list[str] = []
    for text, triples in parts:
        piece = text.strip()
        if not piece:
            raise ValueError("segment text must be non-empty")
        if triples:
            piece = f"{piece} {_render_tag(ProveTag(tuple(triples)))}"
        rendered.append(piece)
    return parse_annotated(" ".join(rendered), mode="strict")


def strip_tags(text: str) -> str:
    """Plain text with every provenance tag removed and whitespace
    normalized. Unclosed tags are dropped to end-of-text, best effort."""
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        j = text.find(TAG_OPEN, i)
        if j < 0:
            out.append(text[i:])
            break
        out.append(text[i:j])
        close = text.find("]", j)
        if close < 0:
            logger.warning("dropping unclosed provenance tag at offset %d", j)
            break
        i = close + 1
    return " ".join("".join(out).split())


# --------------------------------------------------------------------------
# validation

_TAG_CONSUMING_KINDS = frozenset(
    {
        ViolationKind.MALFORMED_TUPLE,
        ViolationKind.UNKNOWN_RELATION,
        ViolationKind.EMPTY_TAG,
    }
)


def validate(answer, docs, policy: ValidationPolicy = DEFAULT_POLICY) -> ValidationReport:
    """Check an answer against its source documents.

    Reports tag completeness (MissingTag), structure (SplitTags for
    detached tags), index consistency (IndexOutOfRange), and re-reports
    any lenient parse issues. DuplicateTriple is a warning and does not
    make the answer invalid.
    """
    violations: list[Violation] = []
    warnings: list[Violation] = []

    for issue in answer.parse_issues:
        v = Violation(issue.kind, issue.segment_index, issue.detail)
        if issue.kind is ViolationKind.DUPLICATE_TRIPLE:
            warnings.append(v)
        else:
            violations.append(v)

    for det in answer.detached:
        violations.append(
            Violation(
                ViolationKind.SPLIT_TAGS,
                det.after_segment,
                "tag not bound to a sentence; provenance for one sentence "
                "must sit in a single tag",
            )
        )

    if policy.require_tags:
        consumed = {
            i.segment_index
            for i in answer.parse_issues
            if i.segment_index is not None and i.kind in _TAG_CONSUMING_KINDS
        }
        for idx, seg in enumerate(answer.segments):
            if seg.tag is None and idx not in consumed and not policy.is_exempt(seg.text):
                violations.append(
                    Violation(ViolationKind.MISSING_TAG, idx, "sentence has no provenance tag")
                )

    def check_triples(triples, seg_index):
        for t in triples:
            if not docs.contains(t.doc_id, t.sent_id):
                violations.append(
                    Violation(
                        ViolationKind.INDEX_OUT_OF_RANGE,
                        seg_index,
                        f"({t.doc_id},{t.sent_id}) does not resolve in the documents",
                    )
                )

    for idx, seg in enumerate(answer.segments):
        if seg.tag is not None:
            check_triples(seg.tag.triples, idx)
    for det in answer.detached:
        check_triples(det.tag.triples, det.after_segment)

    return ValidationReport(not violations, tuple(violations), tuple(warnings))


def validate_text(
    text: str,
    docs,
    policy: ValidationPolicy = DEFAULT_POLICY,
    mode: ParseMode = "lenient",
) -> ValidationReport:
    """Parse then validate, never raising on bad input: a hard parse
    failure becomes a MalformedTuple violation in the report."""
    try:
        answer = parse_annotated(text, mode=mode)
    except ParseError as exc:
        return ValidationReport(
            False,
            (
                Violation(
                    ViolationKind.MALFORMED_TUPLE,
                    None,
                    f"unparseable: {exc.reason} at offset {exc.position}",
                ),
            ),
        )
    return validate(answer, docs, policy)
