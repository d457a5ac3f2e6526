import pytest

_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record a named acceptance check: ``criterion(n, ok, detail)``."""
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(n: int, ok: bool, detail: str) -> bool:
        store.setdefault(n, []).append((bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        parts = store[n]
        ok = all(p[0] for p in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
