"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

LINES: list[tuple[str, bool, str]] = []


def record(label: str, passed: bool, detail: str) -> bool:
    LINES.append((label, bool(passed), detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
    return bool(passed)
