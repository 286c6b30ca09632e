"""Pass/fail lines collected by the acceptance tests, printed in the summary."""

LINES = []


def report(number, title, passed, detail):
    line = f"ACCEPTANCE {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    LINES.append((number, line))
    print(line, flush=True)
    return passed
