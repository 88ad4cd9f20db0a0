import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kcm.dynsys import register_example
from kcm.integrate import generate_dataset

settings.register_profile(
    "kcm",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("kcm")


@pytest.fixture(scope="session")
def datasets():
    """Lazily generated reference datasets, shared by every test in the session."""
    cache = {}

    def get(example: int):
        if example not in cache:
            cache[example] = generate_dataset(register_example(example))
        return cache[example]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting -------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.items: list[tuple[str, object, bool]] = []

    def check(self, name: str, measured, ok: bool) -> bool:
        self.items.append((name, measured, bool(ok)))
        return bool(ok)

    @property
    def ok(self) -> bool:
        return bool(self.items) and all(ok for _, _, ok in self.items)

    def failures(self) -> str:
        return "; ".join(f"{n}={m!r}" for n, m, ok in self.items if not ok)


@pytest.fixture
def criterion():
    """Context manager that records one acceptance line and asserts all its checks."""
    from contextlib import contextmanager

    @contextmanager
    def _run(number: int, title: str):
        rec = _Criterion(number, title)
        try:
            yield rec
        except BaseException as exc:
            _ACCEPTANCE[number] = (title, False, f"error: {exc!r}")
            raise
        _ACCEPTANCE[number] = (title, rec.ok, rec.failures())
        assert rec.ok, f"criterion {number} failed: {rec.failures()}"

    return _run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
        if detail and not ok:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
