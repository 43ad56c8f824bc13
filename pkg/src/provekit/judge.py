"""LLM-judge orchestration: prompts, parsing, rule enforcement,
aggregation, and a chat-completions gateway client.

Two judges run per item. The text-quality judge scores the plain answer
0-5; the traceability judge scores the citation tags, one 0-5 score per
relation type (or null when the type is absent everywhere) plus an
overall citation score. Two hard rules are enforced locally after
parsing, so a drifting judge cannot break them: a relation type present
in the reference labels but absent from the response is forced to 0,
and a type absent from both sides is forced to null.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Protocol, Sequence

import requests

from provekit.corpus import DocumentSet, Instance
from provekit.errors import (
    EmptyInputError,
    GatewayUnavailableError,
    JudgeParseError,
    ParseError,
)
from provekit.syntax import AnnotatedAnswer, RelationType, parse_annotated

JudgeKind = Literal["text_quality", "traceability"]

TEXT_QUALITY_PROMPT = """You are a content quality evaluation expert. Your task is to evaluate the text quality of a Q&A model's response.

Input Data:
- id: Data item ID.
- question: The user's query.
- documents: The source material provided to the model.
- labels: The standard reference answer (Ground Truth).
- response: The model's generated answer.

Objective:
Evaluate the natural language answer itself, ignoring any [PROVE] tags.
Compare the model's response against the labels and the documents.

Scoring Criteria (0-5):

Focus on Accuracy, Fluency, and Completeness.

5 (Perfect): Accurate, fluent, complete. No hallucinations.

4 (Good): Basically accurate. Covers the main points.

3 (Acceptable): Captures the core answer, minor slips.

2 (Poor): Misses key information, hallucinates, or reads poorly.

1 (Very Poor): Barely relevant or severe errors.

0 (Useless): Completely wrong or empty.

Output Format:

Strictly output in the following JSON format. Do not add any extra explanations.

{
  "id": "<id of the current data item>",
  "question": "<question of the current data item>",
  "text_quality_score": <integer from 0 to 5>,
  "text_quality_reasoning": "<Concise explanation of the score>"
}

---

Now evaluate the following item.

id: <<ID>>
question: <<QUESTION>>
documents:
<<DOCUMENTS>>
labels: <<LABELS>>
response: <<RESPONSE>>"""

TRACEABILITY_PROMPT = """You are a rigorous citation evaluation expert. Your task is to evaluate the Traceability of a Q&A model's response.
You must verify the model's [PROVE] tags against the provided documents and the standard ground-truth labels.

Input Data:
- id: Data item ID.
- question: The user's query.
- documents: The source material.
- labels: The standard reference answer (Ground Truth).
- response: The model's generated answer (containing [PROVE] tags).

The definitions of the attribution relationships inside [PROVE] tags are as follows:

Quotation: The answer sentence partially or fully copies sentences from the source document.

Compression: The answer sentence condenses information from one or more source sentences.

Inference: The answer sentence is based on information implied by the source document.

Evaluate the correctness and completeness of the [PROVE] tags by comparing the response against the labels and the documents.

CRITICAL SCORING LOGIC:

1. Per-Relationship Scores (0-5 or null)

Check for Missing Types (Recall): If a relationship type exists in labels but is NOT in response, the score for that type MUST be 0.

Check for Unused Types: If a relationship type is NOT in labels AND NOT in response, the score MUST be null.

Check for Accuracy (Precision): If the type exists in response, score it by correctness relative to the documents:

5: Most tags of this type are correct and match the logic of the standard labels.

4: More than half of this type are correct; minor issues with indices or boundaries.

3: Mixed accuracy; only about one-third of this type are correct.

2: Only about one-eighth of them are correct.

1: Few tags are correct; the vast majority are hallucinations.

0: All tags of this type are hallucinations or irrelevant, OR the type is required by labels but missing in response.

2. Overall Citation Score (0-5)

Provide a holistic score for the model's citation performance.

5: Perfect. Captures all relationships required by labels with accurate citations.

4: Good. Captured all required relationships but with minor inaccuracies in indices or boundaries.

3: Acceptable but flawed. Missed one relationship type or has several inaccurate citations.

2: Poor. Missed multiple required relationships or most citations are wrong.

1: Very Poor. Citations are mostly hallucinated or irrelevant.

0: No valid citations or complete failure to follow the format.

Special Note on Indexing:

Source documents are 0-indexed. If the answer text refers to "Document 1" but the [PROVE] tag uses index "0", this is considered correct and should not be penalized.

Output Format:

Strictly output in the following JSON format. Do not add any extra explanations.

{
  "id": "<id of the current data item>",
  "question": "<question of the current data item>",
  "relationship_scores": {
    "Quotation": <integer from 0 to 5 OR null>,
    "Compression": <integer from 0 to 5 OR null>,
    "Inference": <integer from 0 to 5 OR null>
  },
  "overall_citation_score": <integer from 0 to 5>,
  "citation_reasoning": "<Explain the scores. Explicitly mention if a type required by 'labels' was missed (Recall error) or if the generated tags were inaccurate (Precision error).>"
}

---

Now evaluate the following item.

id: <<ID>>
question: <<QUESTION>>
documents:
<<DOCUMENTS>>
labels: <<LABELS>>
response: <<RESPONSE>>"""


def render_documents(docs: DocumentSet) -> str:
    """Deterministic plain-text layout of a document set with zero-based
    document and sentence indices."""
    lines: list[str] = []
    for doc in docs.documents:
        lines.append(f"Doc[{doc.doc_id}]:")
        for i, sentence in enumerate(doc.sentences):
            lines.append(f"[{i}] {sentence}")
    return "\n".join(lines)


def _fill(template: str, instance: Instance, response: str) -> str:
    # plain byte-preserving substitution; the templates contain JSON
    # braces, so str.format is not usable here
    return (
        template.replace("<<ID>>", instance.id)
        .replace("<<QUESTION>>", instance.question)
        .replace("<<DOCUMENTS>>", render_documents(instance.documents))
        .replace("<<LABELS>>", instance.reference)
        .replace("<<RESPONSE>>", response)
    )


def render_text_quality_prompt(instance: Instance, response: str) -> str:
    return _fill(TEXT_QUALITY_PROMPT, instance, response)


def render_traceability_prompt(instance: Instance, response: str) -> str:
    return _fill(TRACEABILITY_PROMPT, instance, response)


# --------------------------------------------------------------------------
# scorecards

@dataclass
class JudgeScorecard:
    """Scores for one item. Values are stored as floats so aggregated
    cards can carry column means; judge responses themselves are
    validated to integers in [0, 5]."""

    item_id: str
    text_quality: Optional[float] = None
    overall_citation: Optional[float] = None
    relation_scores: dict[RelationType, Optional[float]] = field(default_factory=dict)
    reasoning: dict[str, str] = field(default_factory=dict)

    def merged_with(self, other: "JudgeScorecard") -> "JudgeScorecard":
        """Combine the text-quality and traceability halves of one item."""
        merged = JudgeScorecard(
            item_id=self.item_id,
            text_quality=self.text_quality if self.text_quality is not None else other.text_quality,
            overall_citation=self.overall_citation
            if self.overall_citation is not None
            else other.overall_citation,
            relation_scores={**other.relation_scores, **self.relation_scores}
            if self.relation_scores
            else dict(other.relation_scores),
            reasoning={**other.reasoning, **self.reasoning},
        )
        return merged


@dataclass(frozen=True)
class RuleCorrection:
    relation: RelationType
    old: Optional[float]
    new: Optional[float]
    reason: str


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def _extract_json(raw: str) -> dict:
    text = raw.strip()
    fenced = _FENCE_RE.search(text)
    if fenced:
        text = fenced.group(1).strip()
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            return obj
    except json.JSONDecodeError:
        pass
    start = text.find("{")
    end = text.rfind("}")
    if start < 0 or end <= start:
        raise JudgeParseError(f"no JSON object in judge output: {raw[:120]!r}")
    try:
        obj = json.loads(text[start : end + 1])
    except json.JSONDecodeError as exc:
        raise JudgeParseError(f"undecodable judge output: {exc.msg}")
    if not isinstance(obj, dict):
        raise JudgeParseError("judge output is not a JSON object")
    return obj


def _check_score(value, what: str, nullable: bool = False) -> Optional[float]:
    if value is None:
        if nullable:
            return None
        raise JudgeParseError(f"{what} must not be null")
    if isinstance(value, bool) or not isinstance(value, int):
        raise JudgeParseError(f"{what} must be an integer, got {value!r}")
    if not 0 <= value <= 5:
        raise JudgeParseError(f"{what} out of range 0-5: {value}")
    return float(value)


def parse_judge_response(raw: str, kind: JudgeKind, item_id: str = "") -> JudgeScorecard:
    """Decode a judge reply into a scorecard, tolerating code fences and
    surrounding prose. Raises JudgeParseError on anything unusable."""
    obj = _extract_json(raw)
    card = JudgeScorecard(item_id=str(obj.get("id", item_id)) or item_id)
    if kind == "text_quality":
        card.text_quality = _check_score(
            obj.get("text_quality_score"), "text_quality_score"
        )
        reasoning = obj.get("text_quality_reasoning")
        if isinstance(reasoning, str):
            card.reasoning["text_quality"] = reasoning
        return card
    if kind == "traceability":
        scores = obj.get("relationship_scores")
        if not isinstance(scores, dict):
            raise JudgeParseError("relationship_scores missing or not an object")
        for relation in RelationType:
            if relation.value not in scores:
                raise JudgeParseError(f"relationship_scores missing {relation.value}")
            card.relation_scores[relation] = _check_score(
                scores[relation.value], relation.value, nullable=True
            )
        card.overall_citation = _check_score(
            obj.get("overall_citation_score"), "overall_citation_score"
        )
        reasoning = obj.get("citation_reasoning")
        if isinstance(reasoning, str):
            card.reasoning["citation"] = reasoning
        return card
    raise ValueError(f"unknown judge kind {kind!r}")


def _relations_present(answer: AnnotatedAnswer) -> set[RelationType]:
    return {t.relation for t in answer.all_triples()}


def enforce_score_rules(
    card: JudgeScorecard,
    reference: AnnotatedAnswer,
    candidate: AnnotatedAnswer,
) -> tuple[JudgeScorecard, list[RuleCorrection]]:
    """Apply the two hard scoring rules to a traceability card.

    Idempotent: a compliant card comes back unchanged with no
    corrections recorded.
    """
    in_ref = _relations_present(reference)
    in_cand = _relations_present(candidate)
    corrections: list[RuleCorrection] = []
    fixed = dict(card.relation_scores)
    for relation in RelationType:
        old = fixed.get(relation)
        if relation in in_ref and relation not in in_cand:
            if old != 0.0:
                fixed[relation] = 0.0
                corrections.append(
                    RuleCorrection(
                        relation, old, 0.0, "required by labels but missing in response"
                    )
                )
        elif relation not in in_ref and relation not in in_cand:
            if old is not None:
                fixed[relation] = None
                corrections.append(
                    RuleCorrection(
                        relation, old, None, "absent from both labels and response"
                    )
                )
    if not corrections:
        return card, []
    updated = JudgeScorecard(
        item_id=card.item_id,
        text_quality=card.text_quality,
        overall_citation=card.overall_citation,
        relation_scores=fixed,
        reasoning=dict(card.reasoning),
    )
    return updated, corrections


@dataclass(frozen=True)
class JudgeAggregate:
    """Column means over a batch of scorecards; null relation scores
    count as zero. ``avg`` is the mean of the five component means."""

    mean_text_quality: float
    mean_overall_prov: float
    mean_quotation: float
    mean_compression: float
    mean_inference: float
    avg: float


def aggregate(cards: Sequence[JudgeScorecard]) -> JudgeAggregate:
    if not cards:
        raise EmptyInputError("no scorecards to aggregate")

    def col(getter: Callable[[JudgeScorecard], Optional[float]]) -> float:
        values = [getter(c) for c in cards]
        return sum(v if v is not None else 0.0 for v in values) / len(values)

    m_text = col(lambda c: c.text_quality)
    m_prov = col(lambda c: c.overall_citation)
    m_quot = col(lambda c: c.relation_scores.get(RelationType.QUOTATION))
    m_comp = col(lambda c: c.relation_scores.get(RelationType.COMPRESSION))
    m_inf = col(lambda c: c.relation_scores.get(RelationType.INFERENCE))
    avg = (m_text + m_prov + m_quot + m_comp + m_inf) / 5.0
    return JudgeAggregate(m_text, m_prov, m_quot, m_comp, m_inf, avg)


# --------------------------------------------------------------------------
# gateway and batch runner

class ModelGateway(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


class HttpChatGateway:
    """Minimal chat-completions client: POST {"model", "messages"} and
    read {"content"} back. Configured via PROVE_JUDGE_URL,
    PROVE_JUDGE_API_KEY, and PROVE_JUDGE_MODEL when not passed."""

    def __init__(
        self,
        endpoint: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        timeout_s: float = 60.0,
        retries: int = 3,
        backoff_s: float = 0.5,
    ):
        self.endpoint = endpoint or os.environ.get("PROVE_JUDGE_URL")
        if not self.endpoint:
            raise ValueError("judge gateway needs an endpoint (PROVE_JUDGE_URL)")
        self.api_key = api_key or os.environ.get("PROVE_JUDGE_API_KEY")
        self.model = model or os.environ.get("PROVE_JUDGE_MODEL", "judge")
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s

    def complete(self, messages: list[dict]) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(
                    self.endpoint,
                    json={"model": self.model, "messages": messages},
                    headers=headers,
                    timeout=self.timeout_s,
                )
                if resp.status_code >= 500:
                    raise GatewayUnavailableError(f"gateway returned {resp.status_code}")
                if resp.status_code != 200:
                    raise GatewayUnavailableError(
                        f"gateway rejected request: {resp.status_code} {resp.text[:200]}"
                    )
                content = resp.json().get("content")
                if not isinstance(content, str):
                    raise GatewayUnavailableError("gateway returned no content field")
                return content
            except (requests.RequestException, ValueError, GatewayUnavailableError) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise GatewayUnavailableError(f"judge gateway unavailable: {last_error}")


@dataclass
class JudgeItem:
    instance: Instance
    response: str


@dataclass
class JudgeFailure:
    index: int
    item_id: str
    reason: str


@dataclass
class JudgeRunResult:
    scorecards: list[JudgeScorecard]
    failures: list[JudgeFailure]
    transcripts: list[dict]


def _lenient_or_empty(text: str) -> AnnotatedAnswer:
    try:
        return parse_annotated(text, mode="lenient")
    except ParseError:
        return AnnotatedAnswer((), text)


def run_judge(
    gateway: ModelGateway,
    items: Sequence[JudgeItem],
    kind: JudgeKind,
    max_in_flight: int = 4,
    transcript_sink: Optional[Callable[[dict], None]] = None,
) -> JudgeRunResult:
    """Render, call, parse, and (for traceability) rule-enforce a batch.

    Per-item parse failures are recorded and skipped; a gateway outage
    aborts the batch, raising GatewayUnavailableError with the partial
    result attached. Scorecards come back in input order.
    """
    if not items:
        raise EmptyInputError("no judge items")
    render = (
        render_text_quality_prompt if kind == "text_quality" else render_traceability_prompt
    )
    results: dict[int, JudgeScorecard] = {}
    failures: list[JudgeFailure] = []
    transcripts: list[dict] = []
    sink_lock = threading.Lock()

    def one(index: int) -> tuple[int, JudgeScorecard]:
        item = items[index]
        prompt = render(item.instance, item.response)
        raw = gateway.complete([{"role": "user", "content": prompt}])
        record = {
            "id": item.instance.id,
            "kind": kind,
            "prompt": prompt,
            "raw_response": raw,
        }
        with sink_lock:
            transcripts.append(record)
            if transcript_sink is not None:
                transcript_sink(record)
        card = parse_judge_response(raw, kind, item_id=item.instance.id)
        if kind == "traceability":
            reference = _lenient_or_empty(item.instance.reference)
            candidate = _lenient_or_empty(item.response)
            card, _ = enforce_score_rules(card, reference, candidate)
        return index, card

    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        futures = {pool.submit(one, i): i for i in range(len(items))}
        try:
            for future in as_completed(futures):
                index = futures[future]
                try:
                    i, card = future.result()
                    results[i] = card
                except JudgeParseError as exc:
                    failures.append(
                        JudgeFailure(index, items[index].instance.id, str(exc))
                    )
        except GatewayUnavailableError as exc:
            for future in futures:
                future.cancel()
            partial = JudgeRunResult(
                [results[i] for i in sorted(results)], failures, transcripts
            )
            raise GatewayUnavailableError(str(exc), partial=partial)

    ordered = [results[i] for i in sorted(results)]
    failures.sort(key=lambda f: f.index)
    return JudgeRunResult(ordered, failures, transcripts)
