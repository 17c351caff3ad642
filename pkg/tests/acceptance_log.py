"""One PASS/FAIL line per acceptance check, echoed in the pytest summary."""

LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} [{criterion}] {detail}"
    LINES.append(line)
    print(line)
    return ok


def info(criterion: str, detail: str) -> None:
    line = f"INFO [{criterion}] {detail}"
    LINES.append(line)
    print(line)
