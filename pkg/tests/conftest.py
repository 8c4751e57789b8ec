from pathlib import Path

import pytest

from igen.engine import prepare

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
FIXTURES = Path(__file__).resolve().parent / "fixtures"

_prepared = {}


def corpus_modules():
    return sorted(CORPUS.glob("*.ir"))


def prepared(name: str):
    """Prepared corpus module by stem, cached across tests."""
    if name not in _prepared:
        _prepared[name] = prepare((CORPUS / f"{name}.ir").read_text())
    return _prepared[name]


@pytest.fixture(scope="session")
def corpus_dir():
    return CORPUS


def pytest_terminal_summary(terminalreporter):
    from helpers import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
