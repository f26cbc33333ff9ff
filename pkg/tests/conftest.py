import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from panomesh import AdjacencyCache, MeshHierarchy


@pytest.fixture(scope="session")
def hierarchy():
    return MeshHierarchy()


@pytest.fixture(scope="session")
def cache():
    return AdjacencyCache()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
