import pytest


@pytest.fixture(scope="session")
def shared_ctx():
    """Cache shared by the reduction and acceptance tests (bifurcation solves are slow)."""
    return {}


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(lines):
            terminalreporter.write_line(lines[cid])
