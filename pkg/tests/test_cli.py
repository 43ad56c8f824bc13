"""End-to-end command-line tests, run in process through main()."""

import http.server
import json
import random
import threading

import pytest

from provekit.cli import main
from provekit.corpus import (
    DocumentSet,
    Instance,
    Prediction,
    load_predictions,
    save_instances,
    save_predictions,
)
from provekit.embedding import LocalHashedTfEmbedder
from provekit.reward import DEFAULT_CONFIG, score_group
from provekit.syntax import parse_annotated

import data
import gen


@pytest.fixture()
def corpus(tmp_path):
    rng = random.Random(2025)
    instances = gen.make_corpus(rng, 6)
    path = tmp_path / "instances.jsonl"
    save_instances(instances, path)
    return instances, path


def _identity_predictions(instances, path):
    save_predictions([Prediction(i.id, i.reference) for i in instances], path)
    return path


# --------------------------------------------------------------------------
# stats

def test_stats_writes_outputs(corpus, tmp_path, capsys):
    instances, inst_path = corpus
    out = tmp_path / "out"
    rc = main(["stats", "--instances", str(inst_path), "--out", str(out)])
    assert rc == 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["total_answers"] == len(instances)
    assert (out / "stats.txt").read_text() == capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "stats"
    assert set(manifest) >= {
        "command", "inputs", "config", "tool_version", "started_utc", "finished_utc",
    }


def test_missing_input_file_is_exit_1(tmp_path, capsys):
    rc = main(["stats", "--instances", str(tmp_path / "nope.jsonl")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# --------------------------------------------------------------------------
# validate

def test_validate_identity_predictions(corpus, tmp_path):
    instances, inst_path = corpus
    preds = _identity_predictions(instances, tmp_path / "preds.jsonl")
    out = tmp_path / "out"
    rc = main([
        "validate", "--instances", str(inst_path),
        "--predictions", str(preds), "--out", str(out),
    ])
    assert rc == 0
    validity = json.loads((out / "validity.json").read_text())
    assert validity == {"format_validity_rate": 1.0, "total": len(instances)}
    rows = [json.loads(l) for l in (out / "validation.jsonl").read_text().splitlines()]
    assert len(rows) == len(instances)
    assert all(row["valid"] for row in rows)


def test_validate_strict_vs_lenient(corpus, tmp_path):
    instances, inst_path = corpus
    relaxed = (
        instances[0].reference
        .replace("Quotation", "quotation")
        .replace("Compression", "compression")
        .replace("Inference", "inference")
    )
    assert relaxed != instances[0].reference
    preds = tmp_path / "preds.jsonl"
    save_predictions([Prediction(instances[0].id, relaxed)], preds)

    rc = main([
        "validate", "--instances", str(inst_path),
        "--predictions", str(preds), "--out", str(tmp_path / "strict"),
    ])
    assert rc == 0
    strict = json.loads((tmp_path / "strict" / "validity.json").read_text())
    assert strict["format_validity_rate"] == 0.0

    rc = main([
        "validate", "--instances", str(inst_path), "--predictions", str(preds),
        "--out", str(tmp_path / "lenient"), "--lenient",
    ])
    assert rc == 0
    lenient = json.loads((tmp_path / "lenient" / "validity.json").read_text())
    assert lenient["format_validity_rate"] == 1.0


def test_validate_unknown_prediction_id(corpus, tmp_path, capsys):
    _, inst_path = corpus
    preds = tmp_path / "preds.jsonl"
    save_predictions([Prediction("ghost", "Some text.")], preds)
    rc = main([
        "validate", "--instances", str(inst_path),
        "--predictions", str(preds), "--out", str(tmp_path / "out"),
    ])
    assert rc == 1
    assert "ghost" in capsys.readouterr().err


# --------------------------------------------------------------------------
# evaluate

def test_evaluate_identity_report(corpus, tmp_path):
    instances, inst_path = corpus
    preds = _identity_predictions(instances, tmp_path / "preds.jsonl")
    out = tmp_path / "out"
    rc = main([
        "evaluate", "--instances", str(inst_path),
        "--predictions", str(preds), "--out", str(out),
    ])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["rouge_l"] == 1.0
    assert report["bleu"] == 1.0
    assert report["provenance"]["f1"] == 1.0
    assert report["format_validity_rate"] == 1.0
    assert (out / "per_relation.csv").read_text().startswith("relation,")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["invalid_format_ids"] == []
    assert manifest["unparseable_ids"] == []


def test_evaluate_reports_are_byte_identical_across_runs(corpus, tmp_path):
    instances, inst_path = corpus
    preds = _identity_predictions(instances, tmp_path / "preds.jsonl")
    for name in ("a", "b"):
        rc = main([
            "evaluate", "--instances", str(inst_path),
            "--predictions", str(preds), "--out", str(tmp_path / name),
        ])
        assert rc == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (
        tmp_path / "b" / "report.json"
    ).read_bytes()


def test_evaluate_unparseable_prediction_exit_2(corpus, tmp_path, capsys):
    instances, inst_path = corpus
    rows = [Prediction(i.id, i.reference) for i in instances]
    rows[0] = Prediction(instances[0].id, 'Broken. [PROVE: ("0","0","Quotation"')
    preds = tmp_path / "preds.jsonl"
    save_predictions(rows, preds)
    out = tmp_path / "out"
    rc = main([
        "evaluate", "--instances", str(inst_path),
        "--predictions", str(preds), "--out", str(out),
    ])
    assert rc == 2
    assert "unparseable" in capsys.readouterr().err
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["unparseable_ids"] == [instances[0].id]
    report = json.loads((out / "report.json").read_text())
    assert report["format_validity_rate"] == pytest.approx(1 - 1 / len(instances))


def test_evaluate_plug_in_scores(corpus, tmp_path):
    instances, inst_path = corpus
    preds = _identity_predictions(instances, tmp_path / "preds.jsonl")
    plug = tmp_path / "plug.json"
    plug.write_text(json.dumps({"meteor": 0.41}))
    out = tmp_path / "out"
    rc = main([
        "evaluate", "--instances", str(inst_path), "--predictions", str(preds),
        "--out", str(out), "--plug-in", str(plug),
    ])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["plug_in_scores"] == {"meteor": 0.41}


# --------------------------------------------------------------------------
# reward

def test_reward_groups_match_library(corpus, tmp_path):
    instances, inst_path = corpus
    inst = instances[0]
    candidates = [inst.reference, "A wrong answer with other words."]
    groups = tmp_path / "groups.jsonl"
    groups.write_text(json.dumps({"id": inst.id, "candidates": candidates}) + "\n")
    out = tmp_path / "out"
    rc = main([
        "reward", "--instances", str(inst_path),
        "--groups", str(groups), "--out", str(out),
    ])
    assert rc == 0
    row = json.loads((out / "rewards.jsonl").read_text())
    assert row["id"] == inst.id

    provider = LocalHashedTfEmbedder()
    reference = parse_annotated(inst.reference, mode="strict")
    parsed = [parse_annotated(c, mode="lenient") for c in candidates]
    breakdowns, advantages = score_group(reference, parsed, provider, DEFAULT_CONFIG)
    assert row["advantages"] == advantages
    assert [c["r_total"] for c in row["per_candidate"]] == [
        b.r_total for b in breakdowns
    ]


def test_reward_weight_override_flags(corpus, tmp_path):
    instances, inst_path = corpus
    inst = instances[0]
    groups = tmp_path / "groups.jsonl"
    groups.write_text(
        json.dumps({"id": inst.id, "candidates": [inst.reference, "Noise."]}) + "\n"
    )
    out = tmp_path / "out"
    rc = main([
        "reward", "--instances", str(inst_path), "--groups", str(groups),
        "--out", str(out), "--alpha", "1.0", "--beta", "0.0",
    ])
    assert rc == 0
    row = json.loads((out / "rewards.jsonl").read_text())
    for cand in row["per_candidate"]:
        assert cand["r_total"] == cand["r_sim"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["alpha"] == 1.0
    assert manifest["config"]["beta"] == 0.0


def test_reward_config_file_and_flag_precedence(corpus, tmp_path):
    instances, inst_path = corpus
    inst = instances[0]
    groups = tmp_path / "groups.jsonl"
    groups.write_text(
        json.dumps({"id": inst.id, "candidates": [inst.reference]}) + "\n"
    )
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tau_c": 0.3, "alpha": 0.7, "beta": 0.3}))
    out = tmp_path / "out"
    rc = main([
        "reward", "--instances", str(inst_path), "--groups", str(groups),
        "--out", str(out), "--config", str(cfg), "--tau-c", "0.6",
    ])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["tau_c"] == 0.6
    assert manifest["config"]["alpha"] == 0.7


def test_reward_unknown_config_key(corpus, tmp_path, capsys):
    instances, inst_path = corpus
    groups = tmp_path / "groups.jsonl"
    groups.write_text(
        json.dumps({"id": instances[0].id, "candidates": ["Text."]}) + "\n"
    )
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gamma": 0.1}))
    rc = main([
        "reward", "--instances", str(inst_path), "--groups", str(groups),
        "--out", str(tmp_path / "out"), "--config", str(cfg),
    ])
    assert rc == 1
    assert "gamma" in capsys.readouterr().err


def test_reward_unknown_group_id(corpus, tmp_path, capsys):
    _, inst_path = corpus
    groups = tmp_path / "groups.jsonl"
    groups.write_text(json.dumps({"id": "ghost", "candidates": ["Text."]}) + "\n")
    rc = main([
        "reward", "--instances", str(inst_path),
        "--groups", str(groups), "--out", str(tmp_path / "out"),
    ])
    assert rc == 1
    assert "ghost" in capsys.readouterr().err


# --------------------------------------------------------------------------
# baseline

def test_baseline_predictions_validate_cleanly(corpus, tmp_path):
    instances, inst_path = corpus
    out = tmp_path / "base"
    rc = main([
        "baseline", "--instances", str(inst_path),
        "--top-k", "2", "--out", str(out),
    ])
    assert rc == 0
    preds = load_predictions(out / "predictions.jsonl")
    assert [p.id for p in preds] == [i.id for i in instances]
    for pred in preds:
        answer = parse_annotated(pred.output, mode="strict")
        assert len(answer.segments) == 2

    check = tmp_path / "check"
    rc = main([
        "validate", "--instances", str(inst_path),
        "--predictions", str(out / "predictions.jsonl"), "--out", str(check),
    ])
    assert rc == 0
    validity = json.loads((check / "validity.json").read_text())
    assert validity["format_validity_rate"] == 1.0


# --------------------------------------------------------------------------
# diagnose

def test_diagnose_identity_is_all_zeros(corpus, tmp_path):
    instances, inst_path = corpus
    preds = _identity_predictions(instances, tmp_path / "clean.jsonl")
    out = tmp_path / "out"
    rc = main([
        "diagnose", "--instances", str(inst_path),
        "--predictions", str(preds), "--out", str(out),
    ])
    assert rc == 0
    lines = (out / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == (
        "label,unsynchronized,incomplete_coverage,incorrect_localization,incorrect_type"
    )
    assert lines[1] == "clean,0,0,0,0"


def test_diagnose_multiple_prediction_files(corpus, tmp_path):
    instances, inst_path = corpus
    rng = random.Random(77)
    clean = _identity_predictions(instances, tmp_path / "clean.jsonl")
    drifted_rows = [
        Prediction(i.id, gen.inject_incorrect_type(i.reference, rng, 1))
        for i in instances
    ]
    drifted = tmp_path / "drifted.jsonl"
    save_predictions(drifted_rows, drifted)
    out = tmp_path / "out"
    rc = main([
        "diagnose", "--instances", str(inst_path),
        "--predictions", str(clean), str(drifted), "--out", str(out),
    ])
    assert rc == 0
    lines = (out / "diagnostics.csv").read_text().splitlines()
    assert lines[1].startswith("clean,")
    assert lines[2].startswith("drifted,")
    assert lines[2].endswith(f",{len(instances)}")


# --------------------------------------------------------------------------
# correlate

def _score_csv(path, rows):
    path.write_text("label,score\n" + "".join(f"{k},{v}\n" for k, v in rows))
    return path


def test_correlate_perfect_positive(tmp_path):
    judge = _score_csv(tmp_path / "judge.csv", [("a", 1.0), ("b", 2.0), ("c", 3.0)])
    human = _score_csv(tmp_path / "human.csv", [("a", 2.0), ("b", 4.0), ("c", 6.0)])
    out = tmp_path / "out"
    rc = main([
        "correlate", "--judge-scores", str(judge),
        "--human-scores", str(human), "--out", str(out),
    ])
    assert rc == 0
    body = json.loads((out / "correlation.json").read_text())
    assert body["n"] == 3
    assert body["pearson_r"] == pytest.approx(1.0, abs=1e-12)
    scatter = (out / "scatter.csv").read_text().splitlines()
    assert scatter[0] == "label,judge,human"
    assert len(scatter) == 4


def test_correlate_uses_shared_labels_only(tmp_path):
    judge = _score_csv(
        tmp_path / "judge.csv", [("a", 1.0), ("b", 2.0), ("only-judge", 9.0)]
    )
    human = _score_csv(
        tmp_path / "human.csv", [("a", 4.0), ("b", 1.0), ("only-human", 9.0)]
    )
    out = tmp_path / "out"
    rc = main([
        "correlate", "--judge-scores", str(judge),
        "--human-scores", str(human), "--out", str(out),
    ])
    assert rc == 0
    body = json.loads((out / "correlation.json").read_text())
    assert body["n"] == 2
    assert body["pearson_r"] == pytest.approx(-1.0, abs=1e-12)


def test_correlate_too_few_shared_labels(tmp_path, capsys):
    judge = _score_csv(tmp_path / "judge.csv", [("a", 1.0), ("b", 2.0)])
    human = _score_csv(tmp_path / "human.csv", [("a", 4.0), ("z", 1.0)])
    rc = main([
        "correlate", "--judge-scores", str(judge),
        "--human-scores", str(human), "--out", str(tmp_path / "out"),
    ])
    assert rc == 1
    assert "two shared labels" in capsys.readouterr().err


# --------------------------------------------------------------------------
# judge

class _JudgeStub(http.server.BaseHTTPRequestHandler):
    break_traceability = False

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        prompt = body["messages"][0]["content"]
        if "content quality evaluation expert" in prompt:
            content = json.dumps(
                {"text_quality_score": 4, "text_quality_reasoning": "fine"}
            )
        elif self.break_traceability:
            content = "not json at all"
        else:
            content = json.dumps(
                {
                    "relationship_scores": {
                        "Quotation": 4,
                        "Compression": 3,
                        "Inference": None,
                    },
                    "overall_citation_score": 4,
                    "citation_reasoning": "solid",
                }
            )
        payload = json.dumps({"content": content}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def judge_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _JudgeStub)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/chat"
    server.shutdown()
    thread.join()


def _fixture_instances(tmp_path, n):
    docs = DocumentSet.from_lists(data.DOCS)
    instances = [
        Instance(f"rated-{i}", data.QUESTION, docs, data.REFERENCE) for i in range(n)
    ]
    path = tmp_path / f"fixture{n}.jsonl"
    save_instances(instances, path)
    return instances, path


def test_judge_both_kinds_merged(tmp_path, judge_server):
    _JudgeStub.break_traceability = False
    instances, inst3 = _fixture_instances(tmp_path, 3)
    preds = _identity_predictions(instances, tmp_path / "preds.jsonl")
    out = tmp_path / "out"
    rc = main([
        "judge", "--instances", str(inst3), "--predictions", str(preds),
        "--out", str(out), "--judge-url", judge_server, "--kind", "both",
    ])
    assert rc == 0
    cards = [json.loads(l) for l in (out / "scorecards.jsonl").read_text().splitlines()]
    assert len(cards) == 3
    for card in cards:
        assert card["text_quality"] == 4.0
        assert card["overall_citation"] == 4.0
        assert card["relation_scores"]["Quotation"] == 4.0
        assert card["relation_scores"]["Compression"] == 3.0
        assert card["relation_scores"]["Inference"] is None
    agg = json.loads((out / "aggregate.json").read_text())
    assert agg["mean_text_quality"] == 4.0
    assert agg["avg"] == pytest.approx((4 + 4 + 4 + 3 + 0) / 5)
    transcripts = (out / "transcripts.jsonl").read_text().splitlines()
    assert len(transcripts) == 6


def test_judge_parse_failures_exit_2(tmp_path, judge_server):
    _JudgeStub.break_traceability = True
    try:
        instances, inst2 = _fixture_instances(tmp_path, 2)
        preds = _identity_predictions(instances, tmp_path / "preds.jsonl")
        out = tmp_path / "out"
        rc = main([
            "judge", "--instances", str(inst2), "--predictions", str(preds),
            "--out", str(out), "--judge-url", judge_server, "--kind", "both",
        ])
        assert rc == 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["failures"]) == 2
        cards = [
            json.loads(l) for l in (out / "scorecards.jsonl").read_text().splitlines()
        ]
        assert all(card["overall_citation"] is None for card in cards)
    finally:
        _JudgeStub.break_traceability = False


def test_judge_needs_endpoint(corpus, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("PROVE_JUDGE_URL", raising=False)
    instances, inst_path = corpus
    preds = _identity_predictions(instances[:1], tmp_path / "preds.jsonl")
    rc = main([
        "judge", "--instances", str(inst_path), "--predictions", str(preds),
        "--out", str(tmp_path / "out"),
    ])
    assert rc == 1
    assert "endpoint" in capsys.readouterr().err
