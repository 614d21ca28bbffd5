"""Acceptance gate: every contract criterion at its stated tolerance.

Each test runs one criterion of the shared acceptance suite and prints its
pass/fail line; the session-scoped workspace reuses meshes and eigensolves
across criteria.
"""

import json

import pytest

from blochhom import acceptance as acc


@pytest.fixture(scope="session")
def workspace():
    return acc.Workspace()


@pytest.mark.parametrize("criterion", acc.ALL_CRITERIA,
                         ids=[c.__name__.replace("criterion_", "") for c in acc.ALL_CRITERIA])
def test_criterion(criterion, workspace):
    result = criterion(workspace)
    print(result.line())
    assert result.passed, json.dumps(result.details, indent=1, default=str)
