import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(results):
        r = results[num]
        tr.write_line(f"[{'PASS' if r['ok'] else 'FAIL'}] {num:2d} {r['title']}: {r['detail']}")
    missing = [n for n in range(1, 11) if n not in results]
    for n in missing:
        tr.write_line(f"[FAIL] {n:2d} no result recorded")
