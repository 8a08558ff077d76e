"""Time series reasoning exams: builtin templates, IRT refinement, template DSL and scoring."""

import json as _json

from . import _core
from ._core import (
    TsexamError,
    cosine_distance,
    levenshtein,
    levenshtein_norm,
    parse_answer,
    predict_prob,
    render_plot,
    serialize_text,
)

__all__ = [
    "TsexamError",
    "cosine_distance",
    "dsl_evaluate",
    "dsl_parse",
    "fit_2pl",
    "generate_exam",
    "instantiate",
    "levenshtein",
    "levenshtein_norm",
    "list_templates",
    "materialize",
    "parse_answer",
    "predict_prob",
    "render_plot",
    "score",
    "serialize_text",
    "validate_exam",
]


def list_templates():
    return _json.loads(_core.list_templates())


def instantiate(template_id, forced_correct=None, seed=0):
    return _json.loads(_core.instantiate(template_id, forced_correct, seed))


def generate_exam(total=763, seed=0):
    """Exam file text (JSON)."""
    return _core.generate_exam(total, seed)


def validate_exam(text):
    _core.validate_exam(text)


def fit_2pl(matrix, epochs=2000):
    """Fits a 2PL model to a question x candidate 0/1 matrix (-1 marks a missing entry)."""
    return _json.loads(_core.fit_2pl([list(map(int, row)) for row in matrix], epochs))


def materialize(recipe):
    return _core.materialize(_json.dumps(recipe))


def dsl_parse(document):
    """Parses a template document; returns its name."""
    return _core.dsl_parse(document if isinstance(document, str) else _json.dumps(document))


def dsl_evaluate(document, dataset, num_samples, seed=0):
    """dataset: {"channels": [...], "samples": [{"channels": [[...]], "metadata": {...}}]}."""
    doc = document if isinstance(document, str) else _json.dumps(document)
    return _json.loads(_core.dsl_evaluate(doc, _json.dumps(dataset), num_samples, seed))


def score(exam_text, responses):
    return _json.loads(_core.score(exam_text, [_json.dumps(r) for r in responses]))
