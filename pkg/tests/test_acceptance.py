"""One test per acceptance criterion; each prints its pass/fail line.

Tolerances live in :mod:`distopt.acceptance` and are checked here so a
silent loosening shows up as a test failure.
"""

import time

import pytest

from conftest import record_acceptance
from distopt import acceptance as acc

_suite_start = []


def _check(result):
    line = result.line()
    print(line)
    record_acceptance(line)
    assert result.passed, line


def test_tolerances_are_pinned():
    assert acc.TOTAL_REL_TOL == 0.02
    assert acc.PRICE_REL_TOL == 0.05
    assert acc.KKT_TOL == 1e-2
    assert acc.TRACK_REL_TOL == 0.10
    assert acc.EQUAL_COST_TOL == 1e-2
    assert acc.OVERRIDE_REDUCTION == 0.5
    assert acc.GRAD_REL_TOL == 1e-6 and acc.GRAD_POINTS == 50
    assert acc.ZERO_PRICE_TOL == 1e-3
    assert acc.DISTRIBUTED_REL_TOL == 0.01
    assert acc.BACKOFF == 0.05
    assert acc.FULL_RUN_BUDGET == 10 and acc.SUITE_BUDGET == 120


@pytest.mark.parametrize("number", sorted(acc.CRITERIA))
def test_criterion(number):
    if not _suite_start:
        _suite_start.append(time.perf_counter())
    _check(acc._guarded(number, acc.CRITERIA[number]))


def test_criterion_12_performance():
    suite = time.perf_counter() - _suite_start[0] if _suite_start else None
    _check(acc._guarded(12, lambda: acc.criterion_12(suite)))
