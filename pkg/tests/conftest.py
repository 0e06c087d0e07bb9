import json
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture
def write_jsonl(tmp_path):
    """Write a list of records (or raw strings) to a JSONL file and return its path."""

    def _write(records, name="data.jsonl"):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as f:
            for rec in records:
                f.write((rec if isinstance(rec, str) else json.dumps(rec)) + "\n")
        return path

    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ------------------------------------------------- acceptance criterion lines

_CRITERIA = pytest.StashKey[dict]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    # a failing fixture fails the criterion too
    if rep.when != "call" and not rep.failed:
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else "FAIL"
    item.config.stash.setdefault(_CRITERIA, {})[number] = f"criterion {number} {status}: {title}" + (
        f" ({detail})" if detail else "")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
