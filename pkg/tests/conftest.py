"""Collects acceptance verdicts and prints one line per criterion at the end of the run."""

from collections import defaultdict

ACCEPTANCE = defaultdict(list)


def record_criterion(number: int, title: str, part: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[(number, title)].append((part, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), parts in sorted(ACCEPTANCE.items()):
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title}")
        for part, ok, detail in parts:
            terminalreporter.write_line(f"      [{'ok' if ok else 'FAIL'}] {part}: {detail}")
