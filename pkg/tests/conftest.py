import functools

import pytest
from hypothesis import HealthCheck, settings

from kswave.model import make_params, profile_bvp, profile_closed_form

settings.register_profile("kswave", deadline=None, suppress_health_check=[HealthCheck.too_slow],
                          derandomize=True)
settings.load_profile("kswave")


@functools.lru_cache(maxsize=None)
def cached_profile(epsilon, m, beta, c):
    p = make_params(epsilon, m, beta, c)
    return profile_closed_form(p) if epsilon == 0 else profile_bvp(p)


_RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line ``(number, passed, detail)`` for the terminal summary."""

    def record(number, passed, detail=""):
        _RESULTS.append((number, bool(passed), detail))
        print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
