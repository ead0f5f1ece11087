from __future__ import annotations

import pytest

from intentdefense.ontology import load_knowledge_base
from intentdefense.simulation.scenario import load_scenario


@pytest.fixture(scope="session")
def fig3_kb():
    return load_knowledge_base("fig3.kb")


@pytest.fixture(scope="session")
def subset_kb():
    return load_knowledge_base("d3fend_subset.kb")


@pytest.fixture(scope="session")
def fig4():
    return load_scenario("fig4.scenario")


@pytest.fixture(scope="session")
def pam():
    return load_scenario("pam.scenario")


@pytest.fixture(scope="session")
def dns():
    return load_scenario("dns_denylist.scenario")


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
