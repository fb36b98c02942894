import pytest

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}
CRITERIA = {
    1: "worked reduction example (n=3, h=2)",
    2: "flat lift is flat",
    3: "lift compatibility suite",
    4: "transport oracle",
    5: "self-parallel discrimination",
    6: "presymplectic suite",
    7: "curvature-condition discrimination",
    8: "coordinate covariance",
    9: "Hamiltonian generator identity",
}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        status = "PASS" if passed else "FAIL"
        print(f"criterion {number} [{status}] {CRITERIA[number]}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {n} [FAIL] {title}: not run")
