import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from agritrust.ontology import (
    OntologyRegistry,
    builtin_text,
    core_ontology_text,
    default_registry,
)
from agritrust.shacl import extract_shapes
from agritrust.turtle import parse_turtle

NOW = datetime(2024, 7, 1, 12, 0, 0, tzinfo=timezone.utc)

AGT = "http://example.org/ns/agritrustcore#"
APP = "http://example.org/ns/application#"
XSD = "http://www.w3.org/2001/XMLSchema#"


@pytest.fixture(scope="session")
def core_text() -> str:
    return core_ontology_text()


@pytest.fixture(scope="session")
def core_graph(core_text):
    return parse_turtle(core_text)


@pytest.fixture(scope="session")
def registry() -> OntologyRegistry:
    reg = default_registry()
    reg.register_extension(builtin_text("agrochem_extension"))
    return reg


@pytest.fixture(scope="session")
def core_shapes(registry):
    return extract_shapes(registry.core.graph)


@pytest.fixture()
def now() -> datetime:
    return NOW


# Acceptance criteria record one verdict line each; the summary hook prints
# them at the end of the run so they are visible under output capture.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
