from pathlib import Path

DATA = Path(__file__).parent / "data"
FIXTURE_TRAIN = DATA / "fixture_train.txt"
FIXTURE_TEST = DATA / "fixture_test.txt"

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
