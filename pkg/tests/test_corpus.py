"""Corpus loading, schema checks, and descriptive statistics."""

import json
import random

import pytest

from provekit.corpus import (
    Document,
    DocumentSet,
    Instance,
    Prediction,
    StatSummary,
    compute_stats,
    instance_from_dict,
    load_instances,
    load_predictions,
    save_instances,
    save_predictions,
)
from provekit.errors import EmptyCorpusError, IndexOutOfRangeError, SchemaError
from provekit.syntax import ProvenanceTriple, RelationType

import data
import gen


def _instance_dict():
    return {
        "id": "q1",
        "question": data.QUESTION,
        "documents": data.DOCS,
        "reference": data.REFERENCE,
    }


# --------------------------------------------------------------------------
# documents

def test_document_rejects_empty_sentence_list():
    with pytest.raises(ValueError):
        Document(0, ())


def test_document_set_contains_and_resolve():
    docs = DocumentSet.from_lists(data.DOCS)
    assert docs.contains(0, 3)
    assert not docs.contains(0, 4)
    assert not docs.contains(3, 0)
    triple = ProvenanceTriple(1, 0, RelationType.QUOTATION)
    assert docs.resolve(triple) == data.DOCS[1][0]
    with pytest.raises(IndexOutOfRangeError):
        docs.resolve(ProvenanceTriple(1, 5, RelationType.QUOTATION))


def test_document_set_as_lists_round_trip():
    docs = DocumentSet.from_lists(data.DOCS)
    assert docs.as_lists() == data.DOCS


# --------------------------------------------------------------------------
# schema

def test_instance_from_dict_happy_path():
    inst = instance_from_dict(_instance_dict())
    assert inst.id == "q1"
    assert inst.documents.contains(2, 0)


@pytest.mark.parametrize("missing", ["id", "question", "documents", "reference"])
def test_instance_from_dict_missing_field(missing):
    payload = _instance_dict()
    del payload[missing]
    with pytest.raises(SchemaError) as err:
        instance_from_dict(payload, line=7)
    assert err.value.line == 7
    assert err.value.field == missing


def test_instance_reference_must_parse_strictly():
    payload = _instance_dict()
    payload["reference"] = "Alpha. [PROVE: (0, 0, Quotation)]"
    with pytest.raises(SchemaError) as err:
        instance_from_dict(payload)
    assert err.value.field == "reference"


def test_instance_reference_triples_must_resolve():
    payload = _instance_dict()
    payload["reference"] = 'Alpha beta. [PROVE: ("0","9","Quotation")]'
    with pytest.raises(SchemaError) as err:
        instance_from_dict(payload)
    assert err.value.field == "reference"
    assert "(0,9)" in str(err.value)


# --------------------------------------------------------------------------
# files

def test_load_save_round_trip(tmp_path):
    rng = random.Random(23)
    instances = gen.make_corpus(rng, 8)
    path = tmp_path / "instances.jsonl"
    save_instances(instances, path)
    loaded = load_instances(path)
    assert [i.id for i in loaded] == [i.id for i in instances]
    assert [i.reference for i in loaded] == [i.reference for i in instances]
    assert [i.documents.as_lists() for i in loaded] == [
        i.documents.as_lists() for i in instances
    ]

    predictions = [Prediction(i.id, i.reference) for i in instances]
    ppath = tmp_path / "preds.jsonl"
    save_predictions(predictions, ppath)
    assert load_predictions(ppath) == predictions


def test_load_instances_reports_offending_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps(_instance_dict())
    path.write_text(good + "\n" + "{not json}\n", encoding="utf-8")
    with pytest.raises(SchemaError) as err:
        load_instances(path)
    assert err.value.line == 2


def test_load_instances_skips_blank_lines(tmp_path):
    path = tmp_path / "blank.jsonl"
    path.write_text("\n" + json.dumps(_instance_dict()) + "\n\n", encoding="utf-8")
    assert len(load_instances(path)) == 1


def test_load_predictions_requires_fields(tmp_path):
    path = tmp_path / "preds.jsonl"
    path.write_text('{"id": "q1"}\n', encoding="utf-8")
    with pytest.raises(SchemaError) as err:
        load_predictions(path)
    assert err.value.field == "output"


# --------------------------------------------------------------------------
# statistics

def test_stat_summary_values():
    summary = StatSummary.from_values([1, 2, 2, 7])
    assert summary.avg == 3.0
    assert summary.median == 2.0
    assert summary.min == 1.0
    assert summary.max == 7.0
    with pytest.raises(EmptyCorpusError):
        StatSummary.from_values([])


def test_compute_stats_on_known_corpus():
    # two answers built by hand: 2 tags + 3 tags, 3 + 4 triples
    docs = [["Alpha one two.", "Beta three four five."]]
    ref_a = (
        'Gamma six seven. [PROVE: ("0","0","Quotation"), ("0","1","Compression")] '
        'Delta eight. [PROVE: ("0","0","Inference")]'
    )
    ref_b = (
        'Epsilon nine. [PROVE: ("0","0","Quotation")] '
        'Zeta ten eleven. [PROVE: ("0","1","Quotation"), ("0","0","Compression")] '
        'Eta twelve. [PROVE: ("0","1","Inference")]'
    )
    instances = [
        Instance("a", "what?", DocumentSet.from_lists(docs), ref_a),
        Instance("b", "what?", DocumentSet.from_lists(docs), ref_b),
    ]
    stats = compute_stats(instances)
    assert stats.total_answers == 2
    assert stats.total_tags == 5
    assert stats.total_triples == 7
    assert stats.tags_per_answer.avg == 2.5
    assert stats.triples_per_answer.avg == 3.5
    assert stats.triples_per_tag.avg == 7 / 5
    assert stats.triples_per_tag.median == 1.0
    assert stats.answer_words.avg == (5 + 7) / 2
    assert stats.doc_sentences.avg == 2.0
    assert stats.doc_words.avg == 7.0
    assert stats.relation_counts == {
        RelationType.QUOTATION: 3,
        RelationType.COMPRESSION: 2,
        RelationType.INFERENCE: 2,
    }


def test_compute_stats_counts_detached_tags():
    # detached tags are structural (not parse errors), so the counter
    # must include them in tag and triple totals
    docs = DocumentSet.from_lists([["Alpha one."]])
    reference = (
        'Beta two. [PROVE: ("0","0","Quotation")] [PROVE: ("0","0","Compression")]'
    )
    stats = compute_stats([Instance("x", "q?", docs, reference)])
    assert stats.total_tags == 2
    assert stats.total_triples == 2
    assert stats.relation_counts[RelationType.COMPRESSION] == 1


def test_compute_stats_rejects_empty():
    with pytest.raises(EmptyCorpusError):
        compute_stats([])
