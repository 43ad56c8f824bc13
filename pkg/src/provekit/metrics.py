"""Evaluation metrics for annotated answers.

Text quality is scored with LCS-based ROUGE-L and corpus BLEU-4;
provenance quality with set-intersection precision/recall/F1 over
triples, overall and per relation. ``evaluate_corpus`` bundles the
corpus-level report used by both the CLI and the HTTP service.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

from provekit.errors import (
    DegenerateInputError,
    EmptyCorpusError,
    EmptyInputError,
    ParseError,
)
from provekit.syntax import (
    AnnotatedAnswer,
    ProvenanceTriple,
    RelationType,
    ValidationPolicy,
    DEFAULT_POLICY,
    parse_annotated,
    strip_tags,
    validate,
    validate_text,
)
from provekit.textseg import tokenize

_BLEU_SMOOTH = 1e-9
_MAX_NGRAM = 4


@dataclass(frozen=True)
class PrfScore:
    precision: float
    recall: float
    f1: float


def _prf(tp: int, n_cand: int, n_ref: int) -> PrfScore:
    p = tp / n_cand if n_cand else 0.0
    r = tp / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PrfScore(p, r, f)


# --------------------------------------------------------------------------
# text metrics

def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, two-row DP."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """ROUGE-L F-score with equal weight on precision and recall.

    With P = L/|c| and R = L/|r| the harmonic mean reduces to
    2L/(|c|+|r|), which is what gets returned; 0 when either side is
    empty or nothing is shared.
    """
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    return 2 * lcs / (len(candidate) + len(reference))


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> float:
    """Corpus BLEU-4 with uniform weights and brevity penalty.

    Order precisions with zero matches are smoothed by substituting
    a small epsilon numerator; orders with no n-grams at all (every
    candidate shorter than n) are treated as satisfied.
    """
    if not pairs:
        raise EmptyCorpusError("no sentence pairs")
    clipped = [0] * _MAX_NGRAM
    totals = [0] * _MAX_NGRAM
    cand_len = 0
    ref_len = 0
    for candidate, reference in pairs:
        cand_len += len(candidate)
        ref_len += len(reference)
        for n in range(1, _MAX_NGRAM + 1):
            cand_counts = _ngrams(candidate, n)
            if not cand_counts:
                continue
            ref_counts = _ngrams(reference, n)
            totals[n - 1] += sum(cand_counts.values())
            clipped[n - 1] += sum(
                min(c, ref_counts[g]) for g, c in cand_counts.items()
            )
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(_MAX_NGRAM):
        if totals[n] == 0:
            continue
        numerator = clipped[n] if clipped[n] > 0 else _BLEU_SMOOTH
        log_sum += math.log(numerator / totals[n]) / _MAX_NGRAM
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_sum)


# --------------------------------------------------------------------------
# provenance metrics

PrfMode = Literal["pooled", "positional", "aligned"]


def _segment_triples(answer: AnnotatedAnswer) -> list[set[ProvenanceTriple]]:
    return [
        set(seg.tag.triples) if seg.tag is not None else set()
        for seg in answer.segments
    ]


def provenance_prf(
    candidate: AnnotatedAnswer,
    reference: AnnotatedAnswer,
    mode: PrfMode = "pooled",
    alignment: Optional[Sequence[tuple[int, int]]] = None,
) -> PrfScore:
    """Triple-level precision/recall/F1 between two answers.

    pooled      set intersection over the union of triples on each side
                (detached tags included).
    positional  micro-average over same-index sentence pairs; unpaired
                segments keep their triples in the denominators.
    aligned     micro-average over caller-supplied (candidate, reference)
                segment index pairs; matched triples are counted once
                per side so scores stay within [0, 1].
    """
    if mode == "pooled":
        cand_pool = candidate.all_triples()
        ref_pool = reference.all_triples()
        return _prf(len(cand_pool & ref_pool), len(cand_pool), len(ref_pool))

    cand_sets = _segment_triples(candidate)
    ref_sets = _segment_triples(reference)
    n_cand = sum(len(s) for s in cand_sets)
    n_ref = sum(len(s) for s in ref_sets)

    if mode == "positional":
        tp = 0
        for i in range(max(len(cand_sets), len(ref_sets))):
            c = cand_sets[i] if i < len(cand_sets) else set()
            r = ref_sets[i] if i < len(ref_sets) else set()
            tp += len(c & r)
        return _prf(tp, n_cand, n_ref)

    if mode == "aligned":
        if alignment is None:
            raise ValueError("aligned mode needs an alignment")
        matched_cand: set[tuple[int, ProvenanceTriple]] = set()
        matched_ref: set[tuple[int, ProvenanceTriple]] = set()
        for j, k in alignment:
            c = cand_sets[j] if 0 <= j < len(cand_sets) else set()
            r = ref_sets[k] if 0 <= k < len(ref_sets) else set()
            for t in c & r:
                matched_cand.add((j, t))
                matched_ref.add((k, t))
        p = len(matched_cand) / n_cand if n_cand else 0.0
        r_ = len(matched_ref) / n_ref if n_ref else 0.0
        f = 2 * p * r_ / (p + r_) if p + r_ > 0 else 0.0
        return PrfScore(p, r_, f)

    raise ValueError(f"unknown mode {mode!r}")


def per_relation_prf(
    candidate: AnnotatedAnswer, reference: AnnotatedAnswer
) -> dict[RelationType, PrfScore]:
    """Pooled PRF restricted to each relation type. Relations absent
    from both sides are left out of the map."""
    cand_pool = candidate.all_triples()
    ref_pool = reference.all_triples()
    out: dict[RelationType, PrfScore] = {}
    for relation in RelationType:
        c = {t for t in cand_pool if t.relation is relation}
        r = {t for t in ref_pool if t.relation is relation}
        if not c and not r:
            continue
        out[relation] = _prf(len(c & r), len(c), len(r))
    return out


def format_validity_rate(reports: Sequence) -> float:
    """Fraction of validation reports that are valid."""
    if not reports:
        raise EmptyInputError("no validation reports")
    return sum(1 for r in reports if r.valid) / len(reports)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise DegenerateInputError("length mismatch")
    n = len(xs)
    if n < 2:
        raise DegenerateInputError("need at least two points")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        raise DegenerateInputError("zero variance")
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


# --------------------------------------------------------------------------
# failure-mode diagnostics

@dataclass
class DiagnosticCounts:
    """Counts of the four observed provenance failure modes."""

    unsynchronized: int = 0
    incomplete_coverage: int = 0
    incorrect_localization: int = 0
    incorrect_type: int = 0

    def add(self, other: "DiagnosticCounts") -> None:
        self.unsynchronized += other.unsynchronized
        self.incomplete_coverage += other.incomplete_coverage
        self.incorrect_localization += other.incorrect_localization
        self.incorrect_type += other.incorrect_type


def diagnose(
    candidate: AnnotatedAnswer,
    reference: AnnotatedAnswer,
    docs=None,
    alignment: Optional[Sequence] = None,
) -> DiagnosticCounts:
    """Classify a candidate's provenance mistakes against the reference.

    ``alignment`` is the forward alignment (candidate -> reference), as
    produced by ``embedding.align_forward``; pairs that failed the gate
    are skipped. ``docs`` is accepted for interface symmetry with the
    validator and not needed by the classification itself.

    unsynchronized          detached tags (structure out of sync)
    incomplete_coverage     candidate sentence aligned to a tagged
                            reference sentence but itself untagged
    incorrect_localization  candidate triple whose (doc, sent) pair is
                            absent from the aligned reference sentence
    incorrect_type          (doc, sent) matches a reference triple but
                            the relation differs
    """
    counts = DiagnosticCounts(unsynchronized=len(candidate.detached))
    if alignment is None:
        alignment = []
    ref_sets = _segment_triples(reference)
    for pair in alignment:
        if not getattr(pair, "passed_gate", True):
            continue
        j = pair.source_index
        k = pair.target_index
        if not (0 <= j < len(candidate.segments) and 0 <= k < len(ref_sets)):
            continue
        seg = candidate.segments[j]
        ref_triples = ref_sets[k]
        ref_pairs = {(t.doc_id, t.sent_id) for t in ref_triples}
        if seg.tag is None:
            if ref_triples:
                counts.incomplete_coverage += 1
            continue
        for t in seg.tag.triples:
            if t in ref_triples:
                continue
            if (t.doc_id, t.sent_id) in ref_pairs:
                counts.incorrect_type += 1
            else:
                counts.incorrect_localization += 1
    return counts


# --------------------------------------------------------------------------
# corpus evaluation

CorpusAggregate = Literal["mean", "global"]


@dataclass(frozen=True)
class EvalReport:
    """Corpus-level evaluation row."""

    rouge_l: float
    bleu: float
    provenance: PrfScore
    per_relation: dict[RelationType, PrfScore]
    format_validity_rate: float
    plug_in_scores: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class CorpusEvaluation:
    report: EvalReport
    invalid_ids: tuple[str, ...]
    unparseable_ids: tuple[str, ...]


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def evaluate_corpus(
    instances: Sequence,
    predictions: Sequence,
    aggregate: CorpusAggregate = "mean",
    plug_in_scores: Optional[dict[str, float]] = None,
    policy: ValidationPolicy = DEFAULT_POLICY,
    parse_mode: str = "strict",
) -> CorpusEvaluation:
    """Score a prediction set against its instances.

    Predictions join instances 1:1 by id (ValueError on orphans).
    Unparseable outputs still get text scores via tag stripping but
    contribute zero provenance and count as format-invalid. With
    ``aggregate="mean"`` provenance is pooled per answer and averaged
    over answers; ``"global"`` pools every triple across the corpus
    into one computation.
    """
    if not instances or not predictions:
        raise EmptyCorpusError("need at least one instance and one prediction")
    by_id = {inst.id: inst for inst in instances}
    pred_ids = [p.id for p in predictions]
    missing = [pid for pid in pred_ids if pid not in by_id]
    orphaned = sorted(set(by_id) - set(pred_ids))
    if missing or orphaned or len(pred_ids) != len(set(pred_ids)):
        raise ValueError(
            "instances and predictions must join 1:1 by id; "
            f"unknown prediction ids {missing[:5]}, unmatched instance ids {orphaned[:5]}"
        )

    rouge_scores: list[float] = []
    bleu_pairs: list[tuple[list[str], list[str]]] = []
    reports = []
    invalid_ids: list[str] = []
    unparseable_ids: list[str] = []
    per_answer_prf: list[PrfScore] = []
    per_answer_rel: list[dict[RelationType, PrfScore]] = []
    global_tp = 0
    global_cand = 0
    global_ref = 0
    rel_global = {r: [0, 0, 0] for r in RelationType}

    for pred in predictions:
        inst = by_id[pred.id]
        reference = parse_annotated(inst.reference, mode="strict")
        cand_tokens = tokenize(strip_tags(pred.output))
        ref_tokens = tokenize(strip_tags(inst.reference))
        rouge_scores.append(rouge_l(cand_tokens, ref_tokens))
        bleu_pairs.append((cand_tokens, ref_tokens))

        report = validate_text(pred.output, inst.documents, policy, mode=parse_mode)
        reports.append(report)
        if not report.valid:
            invalid_ids.append(pred.id)
        try:
            candidate = parse_annotated(pred.output, mode="lenient")
        except ParseError:
            unparseable_ids.append(pred.id)
            candidate = AnnotatedAnswer((), pred.output)

        per_answer_prf.append(provenance_prf(candidate, reference, mode="pooled"))
        per_answer_rel.append(per_relation_prf(candidate, reference))
        cand_pool = candidate.all_triples()
        ref_pool = reference.all_triples()
        global_tp += len(cand_pool & ref_pool)
        global_cand += len(cand_pool)
        global_ref += len(ref_pool)
        for relation in RelationType:
            c = {t for t in cand_pool if t.relation is relation}
            r = {t for t in ref_pool if t.relation is relation}
            rel_global[relation][0] += len(c & r)
            rel_global[relation][1] += len(c)
            rel_global[relation][2] += len(r)

    if aggregate == "mean":
        provenance = PrfScore(
            _mean([s.precision for s in per_answer_prf]),
            _mean([s.recall for s in per_answer_prf]),
            _mean([s.f1 for s in per_answer_prf]),
        )
        per_relation: dict[RelationType, PrfScore] = {}
        for relation in RelationType:
            rows = [m[relation] for m in per_answer_rel if relation in m]
            if rows:
                per_relation[relation] = PrfScore(
                    _mean([s.precision for s in rows]),
                    _mean([s.recall for s in rows]),
                    _mean([s.f1 for s in rows]),
                )
    elif aggregate == "global":
        provenance = _prf(global_tp, global_cand, global_ref)
        per_relation = {
            relation: _prf(*counts)
            for relation, counts in rel_global.items()
            if counts[1] or counts[2]
        }
    else:
        raise ValueError(f"unknown aggregate {aggregate!r}")

    report = EvalReport(
        rouge_l=_mean(rouge_scores),
        bleu=bleu(bleu_pairs),
        provenance=provenance,
        per_relation=per_relation,
        format_validity_rate=format_validity_rate(reports),
        plug_in_scores=dict(plug_in_scores or {}),
    )
    return CorpusEvaluation(report, tuple(invalid_ids), tuple(unparseable_ids))
