import contextlib

RESULTS: list[str] = []


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record a PASS/FAIL line for an acceptance criterion; ``detail`` may be filled in."""
    detail: dict = {}
    try:
        yield detail
    except BaseException:
        _line(f"FAIL  criterion {number:>2}: {title}", detail)
        raise
    _line(f"PASS  criterion {number:>2}: {title}", detail)


def _line(head, detail):
    extra = "  ".join(f"{k}={v}" for k, v in detail.items())
    line = f"{head}  {extra}".rstrip()
    RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
