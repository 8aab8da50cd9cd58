import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[str, list[tuple[bool, str]]] = {}


@pytest.fixture
def record_check():
    """Record one sub-check of an acceptance criterion for the end-of-run report."""

    def _record(criterion: str, ok: bool, detail: str):
        ACCEPTANCE_LINES.setdefault(criterion, []).append((bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE_LINES, key=lambda c: int(c.split()[0])):
        checks = ACCEPTANCE_LINES[crit]
        ok = all(c[0] for c in checks)
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {crit}")
        for good, detail in checks:
            tr.write_line(f"      {'ok  ' if good else 'FAIL'} {detail}")
