import contextlib
import time

ACCEPTANCE = {}


@contextlib.contextmanager
def criterion(number, title):
    """Record the outcome of one acceptance criterion for the terminal summary."""
    detail = {}
    start = time.perf_counter()
    try:
        yield detail
    except BaseException:
        ACCEPTANCE[number] = (title, False, detail, time.perf_counter() - start)
        raise
    ACCEPTANCE[number] = (title, True, detail, time.perf_counter() - start)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail, seconds = ACCEPTANCE[number]
        extra = ", ".join(f"{k}={v}" for k, v in detail.items())
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title} "
                                    f"({seconds:.1f} s){': ' + extra if extra else ''}")
