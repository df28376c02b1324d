"""One pass/fail line per acceptance criterion, echoed in the pytest summary."""

LINES = []


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    LINES.append(line)
    print(line)
    return ok
