import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from anticipate.vocab import AnnotationRecord, Vocabulary  # noqa: E402

_acceptance = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    crit = dict(report.user_properties).get("criterion")
    if crit is not None:
        _acceptance[crit] = (report.outcome, dict(report.user_properties).get("title", ""))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_acceptance):
        outcome, title = _acceptance[crit]
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] AC{crit}: {title}")


@pytest.fixture
def kitchen_vocab():
    return Vocabulary(["take", "put", "wash"], ["cup", "plate"])


@pytest.fixture
def kitchen_records(kitchen_vocab):
    v = kitchen_vocab
    return [
        AnnotationRecord("a", [v.pair("take", "cup"), v.pair("put", "cup")],
                         [v.pair("wash", "cup")], "clean cup"),
        AnnotationRecord("b", [v.pair("take", "plate")], [v.pair("put", "plate")]),
    ]
