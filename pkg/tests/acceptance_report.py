"""Acceptance-criterion result ledger, shared by tests and the summary hook.

Lives in its own module (not conftest) because two test trees run in one
pytest session and "conftest" is not a unique import name across them.
"""

_criteria: list[tuple[str, str]] = []


def record_criterion(name: str, passed: bool) -> None:
    _criteria.append((name, "PASS" if passed else "FAIL"))
