import json
import os
import struct

import pytest

import tsexam

FIXTURES = os.environ.get("TSEXAM_FIXTURES", os.path.join(os.path.dirname(__file__), "..", "fixtures"))


def test_templates_and_instances():
    templates = tsexam.list_templates()
    assert len(templates) == 13
    q = tsexam.instantiate("trend_direction", forced_correct=1, seed=3)
    assert q["correct_index"] == 1
    assert len(q["series"][0]["values"]) == 128
    assert q == tsexam.instantiate("trend_direction", forced_correct=1, seed=3)
    with pytest.raises(tsexam.TsexamError):
        tsexam.instantiate("no_such_template")


def test_exam_round_trip():
    text = tsexam.generate_exam(total=20, seed=4)
    tsexam.validate_exam(text)
    assert text == tsexam.generate_exam(total=20, seed=4)
    header = json.loads(text.splitlines()[0])
    assert header["question_count"] == 20


def test_irt():
    assert tsexam.predict_prob(1.3, 0.4, 0.4) == 0.5
    matrix = [[1, 1, 0, 0], [1, 0, 1, 0], [1, 1, 1, 0], [0, 0, 1, -1]]
    fit = tsexam.fit_2pl(matrix, epochs=200)
    assert len(fit["a"]) == 4 and len(fit["theta"]) == 4


def test_synthesis_and_text():
    values = tsexam.materialize({"components": [{"kind": "linear_trend", "slope": 1, "intercept": 0}], "length": 4})
    assert values == [0.0, 1.0, 2.0, 3.0]
    assert tsexam.serialize_text([1.23456, 2.0]) == "1.235,2.000"
    assert tsexam.serialize_text([-0.0005]) == "0.000"


def test_render_plot_dimensions():
    png = tsexam.render_plot([[0.0, 1.0, 0.5]], dpi=25)
    assert png[:8] == b"\x89PNG\r\n\x1a\n"
    width, height = struct.unpack(">II", png[16:24])
    assert (width, height) == (250, 75)
    assert png == tsexam.render_plot([[0.0, 1.0, 0.5]], dpi=25)


def test_dsl():
    with open(os.path.join(FIXTURES, "dsl", "trend_rule.json")) as f:
        doc = f.read()
    assert tsexam.dsl_parse(doc) == "trend_rule"
    out = tsexam.dsl_evaluate(doc, {"samples": [{"channels": [[0, 1, 2, 3]]}]}, 1)
    assert out["questions"][0]["correct_index"] == 0
    with pytest.raises(tsexam.TsexamError):
        tsexam.dsl_parse("{not json")


def test_scoring_and_metrics():
    exam = tsexam.generate_exam(total=5, seed=1)
    ids = [json.loads(line)["id"] for line in exam.splitlines()[1:]]
    responses = [{"question_id": i, "candidate": "m", "raw_text": "[A]"} for i in ids]
    result = tsexam.score(exam, responses)
    assert result["accuracy"]["total"] == 5
    with pytest.raises(tsexam.TsexamError):
        tsexam.score(exam, responses[1:])
    assert tsexam.parse_answer("final answer: [C]", 4) == 2
    assert tsexam.parse_answer("unsure", 4) is None
    assert tsexam.levenshtein("kitten", "sitting") == 3
    assert abs(tsexam.levenshtein_norm("kitten", "sitting") - 3 / 7) < 1e-12
    assert tsexam.cosine_distance([1.0, 0.0], [1.0, 0.0]) == 0.0
