import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


class Verdict:
    """Records one acceptance criterion and asserts it."""

    def __init__(self, number: int):
        self.number = number

    def check(self, ok: bool, detail: str) -> None:
        _RESULTS[self.number] = (bool(ok), detail)
        print(f"criterion {self.number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail


@pytest.fixture
def criterion(request):
    number = request.node.get_closest_marker("criterion").args[0]
    _RESULTS.setdefault(number, (False, "did not complete"))
    return Verdict(number)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
