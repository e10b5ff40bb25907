"""Shared test plumbing: the acceptance-criterion recorder that prints one
pass/fail line per criterion and repeats them in the terminal summary."""

ACCEPTANCE_LINES = []


def record_criterion(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    line = f"[criterion {number:2d}] {status}  {name}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


def record_skip(number: int, name: str, reason: str) -> None:
    line = f"[criterion {number:2d}] SKIP  {name}  ({reason})"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
