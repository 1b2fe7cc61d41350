import os
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def model_cache() -> Path:
    """Trained models persist here between runs (override with NCEA_MODEL_CACHE)."""
    path = Path(os.environ.get("NCEA_MODEL_CACHE", ROOT / ".model_cache"))
    path.mkdir(parents=True, exist_ok=True)
    return path


@pytest.fixture(scope="session")
def acceptance_out() -> Path:
    """BLER curves and latency tables from the acceptance run (override with NCEA_ACCEPTANCE_OUT)."""
    path = Path(os.environ.get("NCEA_ACCEPTANCE_OUT", ROOT / "results" / "acceptance"))
    path.mkdir(parents=True, exist_ok=True)
    return path


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion for the end-of-run summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        passed, detail = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
