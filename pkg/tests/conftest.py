import json
from pathlib import Path

import pytest

from miivgraph import SemModel, model_to_json, parse_model

MODELS = Path(__file__).resolve().parent.parent / "models"

WHOLE_EQUATION = (MODELS / "whole_equation.lav").read_text()
PARTIAL_EQUATION = (MODELS / "partial_equation.lav").read_text()
CONDITIONAL_IV = (MODELS / "conditional_iv.lav").read_text()
ALIASED = (MODELS / "aliased_coefficients.lav").read_text()
POLITICAL_DEMOCRACY = (MODELS / "political_democracy.lav").read_text()

LATENT_TO_OBSERVED = """
l1 =~ y2
y2 ~ y1
y3 ~ l1 + y5
"""

OBSERVED_TO_LATENT = """
l1 =~ y4
y4 ~ y2 + y3
l1 ~ y1
"""

LATENT_TO_LATENT = """
l1 =~ y1
l2 =~ y2
l2 ~ l1
"""


@pytest.fixture
def whole_equation_model() -> SemModel:
    return parse_model(WHOLE_EQUATION)


@pytest.fixture
def partial_equation_model() -> SemModel:
    return parse_model(PARTIAL_EQUATION)


@pytest.fixture
def conditional_iv_model() -> SemModel:
    return parse_model(CONDITIONAL_IV)


@pytest.fixture
def aliased_model() -> SemModel:
    return parse_model(ALIASED)


@pytest.fixture
def political_democracy_model() -> SemModel:
    return parse_model(POLITICAL_DEMOCRACY)


def canonical_json(model: SemModel) -> str:
    """Order-insensitive structural fingerprint for isomorphism checks."""
    data = model_to_json(model)
    data["nodes"] = sorted(data["nodes"], key=lambda n: n["name"])
    for e in data["edges"]:
        if e["type"] == "bidirected":
            e["from"], e["to"] = sorted((e["from"], e["to"]))
    data["edges"] = sorted(data["edges"], key=lambda e: (e["type"], e["from"], e["to"]))
    return json.dumps(data, sort_keys=True)


def structurally_equal(a: SemModel, b: SemModel) -> bool:
    return canonical_json(a) == canonical_json(b)
