"""Batch command-line front end.

Every batch run writes its outputs plus a manifest.json (command,
inputs, config snapshot, tool version, timestamps) into the --out
directory. Exit codes: 0 success, 1 hard failure (I/O or schema), 2
partial success (some predictions could not be parsed and were scored
as format-invalid, or some judge items failed).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from provekit import __version__
from provekit.corpus import (
    Prediction,
    compute_stats,
    load_instances,
    load_predictions,
    save_predictions,
)
from provekit.embedding import embedder_from_env
from provekit.errors import (
    EmptyDocumentsError,
    GatewayUnavailableError,
    ParseError,
    ProveError,
    SchemaError,
)
from provekit.judge import (
    HttpChatGateway,
    JudgeItem,
    aggregate,
    run_judge,
)
from provekit.metrics import diagnose, evaluate_corpus, pearson
from provekit.baseline import BaselineConfig, generate_extractive
from provekit.reporting import (
    diagnostics_csv,
    eval_report_table,
    eval_report_to_dict,
    per_relation_csv,
    scatter_csv,
    stats_table,
    stats_to_dict,
    to_json,
    validation_report_to_dict,
)
from provekit.reward import DEFAULT_CONFIG, RewardConfig, score_group
from provekit.embedding import align_forward
from provekit.syntax import (
    AnnotatedAnswer,
    parse_annotated,
    serialize,
    validate_text,
)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _build_config(args: argparse.Namespace) -> RewardConfig:
    values = {}
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise SchemaError(None, None, "config file must hold a JSON object")
        allowed = set(asdict(DEFAULT_CONFIG))
        unknown = set(loaded) - allowed
        if unknown:
            raise SchemaError(None, None, f"unknown config keys {sorted(unknown)}")
        values.update(loaded)
    for key in ("tau_c", "tau_p", "alpha", "beta", "epsilon", "strict_m"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return replace(DEFAULT_CONFIG, **values) if values else DEFAULT_CONFIG


def _write_manifest(
    out_dir: Path,
    command: str,
    inputs: dict,
    config: RewardConfig,
    started: str,
    extra: Optional[dict] = None,
) -> None:
    manifest = {
        "command": command,
        "inputs": inputs,
        "config": asdict(config),
        "tool_version": __version__,
        "started_utc": started,
        "finished_utc": _utc_now(),
    }
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(to_json(manifest), encoding="utf-8")


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(getattr(args, "out", None) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _embedder(args: argparse.Namespace):
    return embedder_from_env(getattr(args, "embedder", None) or "local")


def _parse_mode(args: argparse.Namespace) -> str:
    return "lenient" if getattr(args, "lenient", False) else "strict"


# --------------------------------------------------------------------------
# commands

def cmd_validate(args: argparse.Namespace) -> int:
    started = _utc_now()
    instances = {i.id: i for i in load_instances(args.instances)}
    predictions = load_predictions(args.predictions)
    out = _out_dir(args)
    mode = _parse_mode(args)
    rows = []
    n_valid = 0
    for pred in predictions:
        inst = instances.get(pred.id)
        if inst is None:
            print(f"error: prediction id {pred.id!r} has no instance", file=sys.stderr)
            return 1
        report = validate_text(pred.output, inst.documents, mode=mode)
        n_valid += report.valid
        rows.append({"id": pred.id, **validation_report_to_dict(report)})
    with open(out / "validation.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    rate = n_valid / len(predictions) if predictions else 0.0
    (out / "validity.json").write_text(
        to_json({"format_validity_rate": rate, "total": len(predictions)}),
        encoding="utf-8",
    )
    _write_manifest(
        out,
        "validate",
        {"instances": str(args.instances), "predictions": str(args.predictions), "mode": mode},
        _build_config(args),
        started,
    )
    print(f"validated {len(predictions)} predictions: {100.0 * rate:.2f}% format-valid")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    started = _utc_now()
    instances = load_instances(args.instances)
    predictions = load_predictions(args.predictions)
    plug_ins = None
    if args.plug_in:
        with open(args.plug_in, encoding="utf-8") as fh:
            plug_ins = json.load(fh)
    out = _out_dir(args)
    evaluation = evaluate_corpus(
        instances,
        predictions,
        aggregate=args.aggregate,
        plug_in_scores=plug_ins,
        parse_mode=_parse_mode(args),
    )
    report = evaluation.report
    (out / "report.json").write_text(to_json(eval_report_to_dict(report)), encoding="utf-8")
    (out / "report.txt").write_text(eval_report_table(report), encoding="utf-8")
    (out / "per_relation.csv").write_text(per_relation_csv(report), encoding="utf-8")
    _write_manifest(
        out,
        "evaluate",
        {
            "instances": str(args.instances),
            "predictions": str(args.predictions),
            "aggregate": args.aggregate,
            "parse_mode": _parse_mode(args),
        },
        _build_config(args),
        started,
        extra={
            "invalid_format_ids": list(evaluation.invalid_ids),
            "unparseable_ids": list(evaluation.unparseable_ids),
        },
    )
    print(eval_report_table(report), end="")
    if evaluation.unparseable_ids:
        print(
            f"warning: {len(evaluation.unparseable_ids)} prediction(s) unparseable, "
            "scored as format-invalid",
            file=sys.stderr,
        )
        return 2
    return 0


def cmd_reward(args: argparse.Namespace) -> int:
    started = _utc_now()
    instances = {i.id: i for i in load_instances(args.instances)}
    config = _build_config(args)
    provider = _embedder(args)
    out = _out_dir(args)
    results = []
    with open(args.groups, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            obj = json.loads(raw)
            if "id" not in obj or "candidates" not in obj:
                raise SchemaError(line_no, None, "group rows need id and candidates")
            inst = instances.get(obj["id"])
            if inst is None:
                raise SchemaError(line_no, "id", f"no instance with id {obj['id']!r}")
            reference = parse_annotated(inst.reference, mode="strict")
            candidates = []
            for text in obj["candidates"]:
                try:
                    candidates.append(parse_annotated(text, mode="lenient"))
                except ParseError:
                    candidates.append(AnnotatedAnswer((), text))
            breakdowns, advantages = score_group(reference, candidates, provider, config)
            results.append(
                {
                    "id": obj["id"],
                    "per_candidate": [
                        {"r_sim": b.r_sim, "r_prov": b.r_prov, "r_total": b.r_total}
                        for b in breakdowns
                    ],
                    "advantages": advantages,
                }
            )
    with open(out / "rewards.jsonl", "w", encoding="utf-8") as fh:
        for row in results:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    _write_manifest(
        out,
        "reward",
        {"instances": str(args.instances), "groups": str(args.groups)},
        config,
        started,
    )
    print(f"scored {len(results)} group(s)")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    started = _utc_now()
    instances = load_instances(args.instances)
    stats = compute_stats(instances)
    out = _out_dir(args)
    (out / "stats.json").write_text(to_json(stats_to_dict(stats)), encoding="utf-8")
    (out / "stats.txt").write_text(stats_table(stats), encoding="utf-8")
    _write_manifest(out, "stats", {"instances": str(args.instances)}, _build_config(args), started)
    print(stats_table(stats), end="")
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    started = _utc_now()
    instances = load_instances(args.instances)
    config = BaselineConfig(top_k=args.top_k)
    out = _out_dir(args)
    predictions = []
    for inst in instances:
        try:
            answer = generate_extractive(inst.question, inst.documents, config)
        except EmptyDocumentsError:
            print(f"error: instance {inst.id!r} has no sentences", file=sys.stderr)
            return 1
        predictions.append(Prediction(inst.id, serialize(answer)))
    save_predictions(predictions, out / "predictions.jsonl")
    _write_manifest(
        out,
        "baseline",
        {"instances": str(args.instances), "top_k": args.top_k},
        _build_config(args),
        started,
    )
    print(f"wrote {len(predictions)} extractive prediction(s)")
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    started = _utc_now()
    instances = {i.id: i for i in load_instances(args.instances)}
    config = _build_config(args)
    provider = _embedder(args)
    out = _out_dir(args)
    rows = []
    for path in args.predictions:
        label = Path(path).stem
        totals = None
        for pred in load_predictions(path):
            inst = instances.get(pred.id)
            if inst is None:
                print(f"error: prediction id {pred.id!r} has no instance", file=sys.stderr)
                return 1
            reference = parse_annotated(inst.reference, mode="strict")
            try:
                candidate = parse_annotated(pred.output, mode="lenient")
            except ParseError:
                candidate = AnnotatedAnswer((), pred.output)
            alignment = None
            if candidate.segments and reference.segments:
                alignment = align_forward(
                    [s.text for s in candidate.segments],
                    [s.text for s in reference.segments],
                    provider,
                    config.tau_c,
                )
            counts = diagnose(candidate, reference, inst.documents, alignment)
            if totals is None:
                totals = counts
            else:
                totals.add(counts)
        if totals is not None:
            rows.append((label, totals))
    (out / "diagnostics.csv").write_text(diagnostics_csv(rows), encoding="utf-8")
    _write_manifest(
        out,
        "diagnose",
        {"instances": str(args.instances), "predictions": [str(p) for p in args.predictions]},
        config,
        started,
    )
    print(diagnostics_csv(rows), end="")
    return 0


def _read_score_csv(path: str) -> dict[str, float]:
    scores: dict[str, float] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise SchemaError(1, None, "score CSV needs a header and two columns")
        for row in reader:
            if len(row) < 2 or not row[0]:
                continue
            scores[row[0]] = float(row[1])
    return scores


def cmd_correlate(args: argparse.Namespace) -> int:
    started = _utc_now()
    xs = _read_score_csv(args.judge_scores)
    ys = _read_score_csv(args.human_scores)
    shared = sorted(set(xs) & set(ys))
    if len(shared) < 2:
        print("error: need at least two shared labels to correlate", file=sys.stderr)
        return 1
    out = _out_dir(args)
    r = pearson([xs[k] for k in shared], [ys[k] for k in shared])
    (out / "correlation.json").write_text(
        to_json({"pearson_r": r, "n": len(shared)}), encoding="utf-8"
    )
    (out / "scatter.csv").write_text(
        scatter_csv([(k, xs[k], ys[k]) for k in shared], "judge", "human"),
        encoding="utf-8",
    )
    _write_manifest(
        out,
        "correlate",
        {"judge_scores": str(args.judge_scores), "human_scores": str(args.human_scores)},
        _build_config(args),
        started,
    )
    print(f"pearson r = {r:.4f} over {len(shared)} shared label(s)")
    return 0


def cmd_judge(args: argparse.Namespace) -> int:
    started = _utc_now()
    instances = {i.id: i for i in load_instances(args.instances)}
    predictions = load_predictions(args.predictions)
    out = _out_dir(args)
    items = []
    for pred in predictions:
        inst = instances.get(pred.id)
        if inst is None:
            print(f"error: prediction id {pred.id!r} has no instance", file=sys.stderr)
            return 1
        items.append(JudgeItem(inst, pred.output))
    try:
        gateway = HttpChatGateway(
            endpoint=args.judge_url, model=args.judge_model, timeout_s=args.timeout_s
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    kinds = ["text_quality", "traceability"] if args.kind == "both" else [args.kind]
    transcript_path = out / "transcripts.jsonl"
    merged: dict[str, object] = {}
    failures = []
    with open(transcript_path, "w", encoding="utf-8") as sink_fh:

        def sink(record: dict) -> None:
            sink_fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

        for kind in kinds:
            try:
                result = run_judge(gateway, items, kind, transcript_sink=sink)
            except GatewayUnavailableError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 1
            failures.extend(result.failures)
            for card in result.scorecards:
                if card.item_id in merged:
                    merged[card.item_id] = merged[card.item_id].merged_with(card)
                else:
                    merged[card.item_id] = card
    cards = list(merged.values())
    with open(out / "scorecards.jsonl", "w", encoding="utf-8") as fh:
        for card in cards:
            fh.write(
                json.dumps(
                    {
                        "id": card.item_id,
                        "text_quality": card.text_quality,
                        "overall_citation": card.overall_citation,
                        "relation_scores": {
                            rel.value: score for rel, score in card.relation_scores.items()
                        },
                        "reasoning": card.reasoning,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
    if cards:
        agg = aggregate(cards)
        (out / "aggregate.json").write_text(to_json(asdict(agg)), encoding="utf-8")
    _write_manifest(
        out,
        "judge",
        {
            "instances": str(args.instances),
            "predictions": str(args.predictions),
            "kind": args.kind,
        },
        _build_config(args),
        started,
        extra={"failures": [asdict(f) for f in failures]},
    )
    print(f"judged {len(cards)} item(s), {len(failures)} failure(s)")
    return 2 if failures else 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from provekit.service import create_app

    app = create_app(embedder=_embedder(args), config=_build_config(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --------------------------------------------------------------------------
# argument wiring

def _add_common(parser: argparse.ArgumentParser, embedder: bool = False) -> None:
    parser.add_argument("--out", default=None, help="output directory (default: ./out)")
    parser.add_argument("--config", default=None, help="JSON file with scoring config")
    parser.add_argument("--lenient", action="store_true", help="parse predictions leniently")
    parser.add_argument("--tau-c", dest="tau_c", type=float, default=None)
    parser.add_argument("--tau-p", dest="tau_p", type=float, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--epsilon", type=float, default=None)
    parser.add_argument(
        "--strict-m",
        dest="strict_m",
        action="store_const",
        const=True,
        default=None,
        help="average provenance over all reference sentences, tagged or not",
    )
    if embedder:
        parser.add_argument(
            "--embedder", choices=("local", "remote"), default="local"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="provekit",
        description="Evaluate, validate, and reward provenance-annotated answers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check predictions for format validity")
    p.add_argument("--instances", required=True)
    p.add_argument("--predictions", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--instances", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--aggregate", choices=("mean", "global"), default="mean")
    p.add_argument("--plug-in", dest="plug_in", default=None, help="JSON of extra metric columns")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reward", help="score candidate groups for RL training")
    p.add_argument("--instances", required=True)
    p.add_argument("--groups", required=True, help="JSONL rows {id, candidates}")
    _add_common(p, embedder=True)
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("stats", help="corpus descriptive statistics")
    p.add_argument("--instances", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("judge", help="run LLM judges over predictions")
    p.add_argument("--instances", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--kind", choices=("text_quality", "traceability", "both"), default="both")
    p.add_argument("--judge-url", default=None, help="override PROVE_JUDGE_URL")
    p.add_argument("--judge-model", default=None, help="override PROVE_JUDGE_MODEL")
    p.add_argument("--timeout-s", type=float, default=60.0)
    _add_common(p)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("baseline", help="emit extractive baseline predictions")
    p.add_argument("--instances", required=True)
    p.add_argument("--top-k", dest="top_k", type=int, default=3)
    _add_common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("diagnose", help="count provenance failure modes")
    p.add_argument("--instances", required=True)
    p.add_argument("--predictions", nargs="+", required=True)
    _add_common(p, embedder=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("correlate", help="correlate two score CSVs by label")
    p.add_argument("--judge-scores", required=True)
    p.add_argument("--human-scores", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("serve", help="start the HTTP reward service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    _add_common(p, embedder=True)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProveError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
