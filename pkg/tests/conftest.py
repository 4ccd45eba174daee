import numpy as np
import pytest

from oic import acc, safesets

ACCEPTANCE_RESULTS = {}


def record_criterion(number, passed, detail=""):
    ACCEPTANCE_RESULTS[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        line = f"CRITERION {number}: {status}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acc_headline():
    """Headline ACC system, controller config, and safe-set bundle."""
    sys_, cfg = acc.build_acc_system()
    bundle = safesets.compute_bundle(sys_, cfg)
    return sys_, cfg, bundle
