import time

import pytest

_RESULTS_KEY = pytest.StashKey[list]()


class CriterionRecorder:
    """Times one acceptance criterion and keeps its verdict for the end-of-run summary."""

    def __init__(self, sink, name, budget_s):
        self.sink, self.name, self.budget_s = sink, name, budget_s
        self.start = time.perf_counter()

    def include(self, seconds):
        """Count work done before the recorder started, such as a shared fixture."""
        self.start -= seconds

    def finish(self, passed, detail):
        elapsed = time.perf_counter() - self.start
        within = elapsed < self.budget_s
        ok = bool(passed) and within
        line = (
            f"{'PASS' if ok else 'FAIL'}  {self.name}: {detail} "
            f"[{elapsed:.1f}s, budget {self.budget_s:g}s{'' if within else ' EXCEEDED'}]"
        )
        self.sink.append(line)
        print(line)
        return ok


@pytest.fixture
def criterion(request):
    sink = request.config.stash.setdefault(_RESULTS_KEY, [])
    return lambda name, budget_s: CriterionRecorder(sink, name, budget_s)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
