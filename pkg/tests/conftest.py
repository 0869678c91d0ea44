import json
from pathlib import Path

import pytest

from adaptsec import problems
from adaptsec.domain import Action

GOLDEN_DIR = Path(__file__).parent / "golden"

CANONICAL_INTRUSION_ACTIONS = [
    Action("exit", ("tenant", "home")),
    Action("close", ("sl",)),
    Action("open", ("d1", "sl")),
    Action("enter", ("outsider", "home")),
]


@pytest.fixture(scope="session")
def base_domain():
    return problems.base_domain()


@pytest.fixture(scope="session")
def goal_model():
    return problems.base_goal_model()


@pytest.fixture()
def untrusted_problem():
    return problems.load_problem(problems.fixture_path("problems/untrusted_device.json"))


@pytest.fixture()
def speaker_problem():
    return problems.load_problem(problems.fixture_path("problems/trusted_speaker.json"))


@pytest.fixture()
def mitm_problem():
    return problems.load_problem(problems.fixture_path("problems/mitm_suspect.json"))


@pytest.fixture(scope="session")
def golden_trace_bytes() -> str:
    return (GOLDEN_DIR / "violating_trace.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def golden_counts() -> dict:
    return json.loads((GOLDEN_DIR / "enumeration_counts.json").read_text(encoding="utf-8"))
