"""Shared fixtures: certified counterexamples are expensive, so each is built
once per session and its wall time is recorded for the runtime criteria."""

import time

import pytest

from hjhom.pipeline import run_pipeline


class TimedResult:
    def __init__(self, value, elapsed):
        self.value = value
        self.elapsed = elapsed


def _timed_pipeline(name):
    t0 = time.perf_counter()
    res = run_pipeline(name)
    return TimedResult(res, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def fig3_certified():
    return _timed_pipeline("fig3_flat")


@pytest.fixture(scope="session")
def fig2_certified():
    return _timed_pipeline("fig2_bump")


@pytest.fixture(scope="session")
def multid_certified():
    return _timed_pipeline("multid_g1")
