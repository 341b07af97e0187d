"""One test per acceptance criterion; each prints a single PASS/FAIL line.

The lines are also repeated in the terminal summary.  The criteria share
the session context, so the dataset and models are built once.
"""

import pytest

from palmgrasp.acceptance import CHECKS, run_check

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("number", [n for n, _, _ in CHECKS], ids=[f"C{n}" for n, _, _ in CHECKS])
def test_criterion(number, ctx):
    r = run_check(number, ctx)
    ACCEPTANCE_LINES.append(r.line())
    print(r.line())
    assert r.passed, r.line()
