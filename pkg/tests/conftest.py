import copy
import json
from importlib import resources

import pytest

from trimarket.case import case_from_dict, load_fixture
from trimarket.studies import solve_equilibrium

ACCEPTANCE_LINES: list[str] = []


def fixture_doc(name: str) -> dict:
    text = resources.files("trimarket.fixtures").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def micro_doc(**changes) -> dict:
    """micro1 as a dict, with top-level sections patched by ``changes``."""
    doc = copy.deepcopy(fixture_doc("micro1"))
    for key, value in changes.items():
        doc[key] = value
    return doc


@pytest.fixture(scope="session")
def fixture_case():
    return load_fixture("case14g8")


@pytest.fixture(scope="session")
def micro_case():
    return load_fixture("micro1")


@pytest.fixture(scope="session")
def solved():
    """Memoized ``solve_equilibrium`` so expensive fixture solves run once per session."""
    cache = {}

    def run(key, case, mode="proposed", **kw):
        if key not in cache:
            cache[key] = solve_equilibrium(case, mode, **kw)
        return cache[key]

    return run


@pytest.fixture
def make_case():
    return lambda doc: case_from_dict(doc)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
