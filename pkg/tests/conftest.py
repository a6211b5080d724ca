import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


HAND_ROWS = np.array([[2.0, 1.0], [-2.0, -1.0], [1.0, 2.0], [-1.0, -2.0]])


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the end-of-run acceptance summary."""

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


PROPERTY_OUTCOMES: dict[str, bool] = {}


def pytest_runtest_logreport(report):
    # criterion 7 is the conjunction of the test_c7_* property tests
    if "test_acceptance.py::test_c7_" in report.nodeid and report.when == "call":
        PROPERTY_OUTCOMES[report.nodeid.split("::")[-1]] = report.passed


def pytest_terminal_summary(terminalreporter):
    lines = list(ACCEPTANCE_LINES)
    if PROPERTY_OUTCOMES:
        failed = sorted(k for k, ok in PROPERTY_OUTCOMES.items() if not ok)
        ok = not failed
        detail = f"{len(PROPERTY_OUTCOMES) - len(failed)}/{len(PROPERTY_OUTCOMES)} property tests passed"
        if failed:
            detail += " (failed: " + ", ".join(failed) + ")"
        lines.append(f"{'PASS' if ok else 'FAIL'}  C7 invariant suites (1000-case properties): {detail}")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: l.split("  ", 1)[1]):
            terminalreporter.write_line(line)
