"""Serialization of reports: JSON, aligned text tables, and CSV.

All JSON emission sorts keys and keeps full float precision so that
identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from typing import Optional, Sequence

from provekit.corpus import CorpusStats
from provekit.metrics import DiagnosticCounts, EvalReport, PrfScore
from provekit.syntax import RelationType, ValidationReport

_RELATION_ORDER = (
    RelationType.QUOTATION,
    RelationType.COMPRESSION,
    RelationType.INFERENCE,
)


def to_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def prf_to_dict(score: PrfScore) -> dict:
    return {"precision": score.precision, "recall": score.recall, "f1": score.f1}


def eval_report_to_dict(report: EvalReport) -> dict:
    return {
        "rouge_l": report.rouge_l,
        "bleu": report.bleu,
        "provenance": prf_to_dict(report.provenance),
        "per_relation": {
            rel.value: prf_to_dict(score) for rel, score in report.per_relation.items()
        },
        "format_validity_rate": report.format_validity_rate,
        "plug_in_scores": dict(report.plug_in_scores),
    }


def eval_report_table(report: EvalReport, judge_avg: Optional[float] = None) -> str:
    """One-row aligned table in the conventional column order: text
    metrics, plug-ins, provenance P/R/F1, format validity, judge."""
    headers = ["ROUGE-L", "BLEU"]
    values = [report.rouge_l, report.bleu]
    for name in sorted(report.plug_in_scores):
        headers.append(name)
        values.append(report.plug_in_scores[name])
    headers += ["Prec.", "Rec.", "F1", "Format (%)"]
    values += [
        report.provenance.precision,
        report.provenance.recall,
        report.provenance.f1,
        100.0 * report.format_validity_rate,
    ]
    if judge_avg is not None:
        headers.append("Judge")
        values.append(judge_avg)
    cells = [f"{v:.4f}" if h != "Format (%)" else f"{v:.2f}" for h, v in zip(headers, values)]
    widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    row = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    return head + "\n" + row + "\n"


def per_relation_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["relation", "precision", "recall", "f1"])
    for relation in _RELATION_ORDER:
        score = report.per_relation.get(relation)
        if score is None:
            continue
        writer.writerow(
            [relation.value, repr(score.precision), repr(score.recall), repr(score.f1)]
        )
    return buf.getvalue()


def diagnostics_csv(rows: Sequence[tuple[str, DiagnosticCounts]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "label",
            "unsynchronized",
            "incomplete_coverage",
            "incorrect_localization",
            "incorrect_type",
        ]
    )
    for label, counts in rows:
        writer.writerow(
            [
                label,
                counts.unsynchronized,
                counts.incomplete_coverage,
                counts.incorrect_localization,
                counts.incorrect_type,
            ]
        )
    return buf.getvalue()


def scatter_csv(rows: Sequence[tuple[str, float, float]], x_name: str, y_name: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", x_name, y_name])
    for label, x, y in rows:
        writer.writerow([label, repr(float(x)), repr(float(y))])
    return buf.getvalue()


def validation_report_to_dict(report: ValidationReport) -> dict:
    def rows(items):
        return [
            {"kind": v.kind.value, "segment_index": v.segment_index, "detail": v.detail}
            for v in items
        ]

    return {
        "valid": report.valid,
        "violations": rows(report.violations),
        "warnings": rows(report.warnings),
    }


def stats_to_dict(stats: CorpusStats) -> dict:
    payload = asdict(stats)
    payload["relation_counts"] = {
        rel.value: count for rel, count in stats.relation_counts.items()
    }
    return payload


def stats_table(stats: CorpusStats) -> str:
    rows = [
        ("answers", str(stats.total_answers), "", "", ""),
        ("tags (total)", str(stats.total_tags), "", "", ""),
        ("triples (total)", str(stats.total_triples), "", "", ""),
    ]
    for name, summary in (
        ("tags / answer", stats.tags_per_answer),
        ("triples / answer", stats.triples_per_answer),
        ("triples / tag", stats.triples_per_tag),
        ("answer words", stats.answer_words),
        ("sentences / doc", stats.doc_sentences),
        ("words / doc", stats.doc_words),
    ):
        rows.append(
            (
                name,
                f"{summary.avg:.2f}",
                f"{summary.median:g}",
                f"{summary.min:g}",
                f"{summary.max:g}",
            )
        )
    for relation in _RELATION_ORDER:
        rows.append(
            (f"{relation.value} triples", str(stats.relation_counts.get(relation, 0)), "", "", "")
        )
    headers = ("statistic", "avg/count", "median", "min", "max")
    widths = [
        max(len(headers[i]), max(len(r[i]) for r in rows)) for i in range(len(headers))
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
