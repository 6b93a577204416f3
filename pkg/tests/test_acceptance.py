"""Acceptance criteria 1-13, one printed PASS/FAIL line each.

Run directly (``python3 tests/test_acceptance.py``) for the summary lines
alone, or through pytest, where each criterion is a separate test.
"""
from __future__ import annotations

import sys

import pytest

from hartree_waveops.acceptance import CRITERIA, Suite


@pytest.fixture(scope="module")
def suite():
    return Suite()


@pytest.mark.slow
@pytest.mark.parametrize("cid", CRITERIA)
def test_criterion(suite, cid, capsys):
    res = suite.run(cid)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()


def main() -> int:
    results = Suite().run_all()
    for res in results:
        print(res.line(), flush=True)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
