"""Shared pytest wiring.

Acceptance gate lines are printed as they happen and echoed again in the
terminal summary so a plain `pytest -v` run still shows one line per
criterion even with output capture on.
"""

import numpy as np
import pytest

GATE_LINES = []


def gate(cid: str, ok: bool, detail: str) -> None:
    """Record one criterion outcome, print it, then assert."""
    line = f"[{cid}] {'PASS' if ok else 'FAIL'} {detail}"
    GATE_LINES.append(line)
    print(line, flush=True)
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not GATE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in GATE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _no_utf8_locale_surprises(monkeypatch):
    # CSV/JSON writers must not depend on the ambient locale.
    monkeypatch.setenv("LC_ALL", "C.UTF-8")


def random_bridge(rng: np.random.Generator, n: int, ln: int) -> np.ndarray:
    """Uniform-ish lazy path 0 -> n in ln steps (feasibility-filtered steps)."""
    pos = np.zeros(ln + 1, dtype=np.int64)
    x = 0
    for t in range(1, ln + 1):
        remaining = ln - t
        steps = [s for s in (-1, 0, 1) if abs(n - (x + s)) <= remaining]
        x += int(rng.choice(steps))
        pos[t] = x
    assert pos[-1] == n
    return pos
