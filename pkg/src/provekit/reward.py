"""Composite reward for provenance-annotated generation.

Candidates are scored against a reference on two axes and blended:

* content fidelity: each candidate sentence is greedily matched to its
  most similar reference sentence by embedding cosine; matches at or
  above the content gate contribute their ROUGE-L score, everything
  else contributes zero, and the mean over candidate sentences is the
  content reward.
* provenance fidelity: each reference sentence is matched back to its
  most similar candidate sentence; matches at or above the provenance
  gate contribute a smoothed F1 between the two sentences' triple sets,
  and the mean over tagged reference sentences is the provenance
  reward. Reference sentences with no triples are skipped by default
  (``strict_m`` restores a literal mean over all of them).

The total is ``alpha * content + beta * provenance``. Group-relative
advantages standardize a group of totals by its mean and population
standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from provekit.embedding import EmbeddingProvider, cosine_matrix
from provekit.metrics import rouge_l
from provekit.syntax import AnnotatedAnswer
from provekit.textseg import tokenize

_ADVANTAGE_EPS = 1e-8


@dataclass(frozen=True)
class RewardConfig:
    """Thresholds, blend weights, and smoothing for reward scoring."""

    tau_c: float = 0.45
    tau_p: float = 0.50
    alpha: float = 0.5
    beta: float = 0.5
    epsilon: float = 1e-8
    strict_m: bool = False

    def __post_init__(self):
        if not (0.0 <= self.tau_c <= 1.0 and 0.0 <= self.tau_p <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValueError("weights must be non-negative and not both zero")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


DEFAULT_CONFIG = RewardConfig()


@dataclass(frozen=True)
class SimSentenceTrace:
    """Per-candidate-sentence content scoring detail."""

    segment_index: int
    matched_ref_index: Optional[int]
    cosine: float
    passed_gate: bool
    rouge_l: float


@dataclass(frozen=True)
class ProvSentenceTrace:
    """Per-reference-sentence provenance scoring detail."""

    ref_index: int
    matched_cand_index: Optional[int]
    cosine: float
    passed_gate: bool
    included: bool
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RewardBreakdown:
    r_sim: float
    r_prov: float
    r_total: float
    per_candidate_sentence: tuple[SimSentenceTrace, ...] = ()
    per_reference_sentence: tuple[ProvSentenceTrace, ...] = ()


def _texts(answer: AnnotatedAnswer) -> list[str]:
    return [seg.text for seg in answer.segments]


def _sim_from_matrix(
    matrix: np.ndarray,
    candidate: AnnotatedAnswer,
    config: RewardConfig,
    ref_tokens: Sequence[list[str]],
) -> tuple[float, tuple[SimSentenceTrace, ...]]:
    traces = []
    total = 0.0
    for j, seg in enumerate(candidate.segments):
        k = int(np.argmax(matrix[j]))
        score = float(matrix[j, k])
        gated = score >= config.tau_c
        value = rouge_l(tokenize(seg.text), ref_tokens[k]) if gated else 0.0
        total += value
        traces.append(SimSentenceTrace(j, k, score, gated, value))
    return total / len(candidate.segments), tuple(traces)


def _prov_from_matrix(
    matrix: np.ndarray,
    candidate: AnnotatedAnswer,
    reference: AnnotatedAnswer,
    config: RewardConfig,
) -> tuple[float, tuple[ProvSentenceTrace, ...]]:
    cand_sets = [
        set(seg.tag.triples) if seg.tag is not None else set()
        for seg in candidate.segments
    ]
    traces = []
    included_f1: list[float] = []
    for k, seg in enumerate(reference.segments):
        ref_triples = set(seg.tag.triples) if seg.tag is not None else set()
        included = bool(ref_triples) or config.strict_m
        j = int(np.argmax(matrix[:, k]))
        score = float(matrix[j, k])
        gated = score >= config.tau_p
        cand_triples = cand_sets[j]
        overlap = len(cand_triples & ref_triples)
        precision = overlap / len(cand_triples) if cand_triples else 0.0
        recall = overlap / len(ref_triples) if ref_triples else 0.0
        f1 = 2 * precision * recall / (precision + recall + config.epsilon)
        contribution = f1 if gated else 0.0
        if included:
            included_f1.append(contribution)
        traces.append(
            ProvSentenceTrace(
                k, j, score, gated, included, precision, recall, contribution
            )
        )
    r_prov = sum(included_f1) / len(included_f1) if included_f1 else 0.0
    return r_prov, tuple(traces)


def _score_pair(
    candidate: AnnotatedAnswer,
    reference: AnnotatedAnswer,
    config: RewardConfig,
    matrix: Optional[np.ndarray],
    ref_tokens: Sequence[list[str]],
) -> RewardBreakdown:
    if matrix is None or matrix.size == 0 or not candidate.segments:
        return RewardBreakdown(0.0, 0.0, 0.0)
    r_sim, sim_traces = _sim_from_matrix(matrix, candidate, config, ref_tokens)
    r_prov, prov_traces = _prov_from_matrix(matrix, candidate, reference, config)
    total = config.alpha * r_sim + config.beta * r_prov
    return RewardBreakdown(r_sim, r_prov, total, sim_traces, prov_traces)


def reward_total(
    candidate: AnnotatedAnswer,
    reference: AnnotatedAnswer,
    provider: EmbeddingProvider,
    config: RewardConfig = DEFAULT_CONFIG,
) -> RewardBreakdown:
    """Full scoring of one candidate against one reference. Embeds each
    side once and reuses the similarity matrix for both directions."""
    cand_texts = _texts(candidate)
    ref_texts = _texts(reference)
    if not cand_texts or not ref_texts:
        return RewardBreakdown(0.0, 0.0, 0.0)
    matrix = cosine_matrix(
        provider.embed_batch(cand_texts), provider.embed_batch(ref_texts)
    )
    return _score_pair(
        candidate, reference, config, matrix, [tokenize(t) for t in ref_texts]
    )


def reward_sim(
    candidate: AnnotatedAnswer,
    reference: AnnotatedAnswer,
    provider: EmbeddingProvider,
    config: RewardConfig = DEFAULT_CONFIG,
) -> tuple[float, tuple[SimSentenceTrace, ...]]:
    """Content-fidelity component only."""
    cand_texts = _texts(candidate)
    ref_texts = _texts(reference)
    if not cand_texts or not ref_texts:
        return 0.0, ()
    matrix = cosine_matrix(
        provider.embed_batch(cand_texts), provider.embed_batch(ref_texts)
    )
    return _sim_from_matrix(matrix, candidate, config, [tokenize(t) for t in ref_texts])


def reward_prov(
    candidate: AnnotatedAnswer,
    reference: AnnotatedAnswer,
    provider: EmbeddingProvider,
    config: RewardConfig = DEFAULT_CONFIG,
) -> tuple[float, tuple[ProvSentenceTrace, ...]]:
    """Provenance-fidelity component only."""
    cand_texts = _texts(candidate)
    ref_texts = _texts(reference)
    if not cand_texts or not ref_texts:
        return 0.0, ()
    matrix = cosine_matrix(
        provider.embed_batch(cand_texts), provider.embed_batch(ref_texts)
    )
    return _prov_from_matrix(matrix, candidate, reference, config)


def score_group(
    reference: AnnotatedAnswer,
    candidates: Sequence[AnnotatedAnswer],
    provider: EmbeddingProvider,
    config: RewardConfig = DEFAULT_CONFIG,
) -> tuple[list[RewardBreakdown], list[float]]:
    """Score a candidate group against one reference and compute
    group-relative advantages over the totals. The reference is
    embedded once for the whole group."""
    if not candidates:
        raise ValueError("need at least one candidate")
    ref_texts = _texts(reference)
    ref_rows = provider.embed_batch(ref_texts) if ref_texts else None
    ref_tokens = [tokenize(t) for t in ref_texts]
    breakdowns = []
    for candidate in candidates:
        cand_texts = _texts(candidate)
        if ref_rows is None or not cand_texts:
            breakdowns.append(RewardBreakdown(0.0, 0.0, 0.0))
            continue
        matrix = cosine_matrix(provider.embed_batch(cand_texts), ref_rows)
        breakdowns.append(_score_pair(candidate, reference, config, matrix, ref_tokens))
    advantages = group_advantages([b.r_total for b in breakdowns])
    return breakdowns, advantages


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Standardize rewards by group mean and population standard
    deviation (epsilon-stabilized). Groups with identical rewards come
    out as all zeros; a singleton group is [0.0]."""
    if not rewards:
        raise ValueError("need at least one reward")
    n = len(rewards)
    if min(rewards) == max(rewards):
        # guard against float drift in the mean: identical rewards must
        # standardize to exactly zero, not noise / _ADVANTAGE_EPS
        return [0.0] * n
    mean = sum(rewards) / n
    variance = sum((r - mean) ** 2 for r in rewards) / n
    std = math.sqrt(variance)
    return [(r - mean) / (std + _ADVANTAGE_EPS) for r in rewards]
