import numpy as np
import pytest

from dstgnn.dataset_io import SAMPLE_RATE_HZ, Recording, TaskId


def tone(freq, seconds=60.0, amp=1.0, phase=0.0, rate=SAMPLE_RATE_HZ):
    t = np.arange(int(round(seconds * rate))) / rate
    return amp * np.sin(2 * np.pi * freq * t + phase)


def as_recording(x, subject="S1", task=TaskId.EC):
    x = np.asarray(x, float)
    if x.ndim == 1:
        x = np.repeat(x[:, None], 19, axis=1)
    return Recording(subject, task, x)


def central_rms(x, frac=0.1):
    n = len(x)
    k = int(n * frac)
    return float(np.sqrt(np.mean(x[k:n - k] ** 2)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting ----------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


class AcceptanceRecorder:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)


@pytest.fixture
def acceptance(request):
    """Record one acceptance criterion; its pass/fail line is printed at the end."""
    marker = request.node.get_closest_marker("criterion")
    rec = AcceptanceRecorder(*marker.args)
    yield rec
    failed = getattr(request.node, "rep_call", None)
    passed = failed is not None and failed.passed
    _ACCEPTANCE[rec.number] = (rec.title, passed, "; ".join(rec.details))
    print(f"\nACCEPTANCE {rec.number} [{'PASS' if passed else 'FAIL'}] {rec.title}"
          + (f" -- {'; '.join(rec.details)}" if rec.details else ""))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[n]
        line = f"criterion {n}: {'PASS' if passed else 'FAIL'} - {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
