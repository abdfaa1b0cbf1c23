import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import write_corpus  # noqa: E402

# (criterion, passed, detail) lines filled in by test_acceptance
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path / "data")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
