"""Collects one status line per acceptance criterion for the terminal summary."""

LINES = []


def record(number, title, passed, detail, elapsed=None, limit=None):
    timing = ""
    if elapsed is not None:
        timing = f" [{elapsed:.1f}s" + (f" / limit {limit:g}s]" if limit is not None else "]")
    line = f"{'PASS' if passed else 'FAIL'} #{number:>2} {title}: {detail}{timing}"
    LINES.append(line)
    print(line)
    return passed
