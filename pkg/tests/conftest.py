import os

import pytest

ACCEPTANCE_LINES = {}


def pytest_configure(config):
    # keep zero-table files out of the user's cache during tests
    if "SPHWAVE_CACHE_DIR" not in os.environ:
        import tempfile

        os.environ["SPHWAVE_CACHE_DIR"] = tempfile.mkdtemp(prefix="sphwave-test-")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SPHWAVE_CACHE_DIR", str(tmp_path))
    return tmp_path
