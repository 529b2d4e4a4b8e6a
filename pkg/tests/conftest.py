import numpy as np
import pytest

from fedbrainage.cohort import CohortSpec, generate_cohort

ACCEPTANCE_RESULTS = []


def record_acceptance(number, passed, detail):
    ACCEPTANCE_RESULTS.append((number, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_SPEC = dict(
    n_centers=4,
    subjects_per_center=[120, 60, 40, 30],
    n_radiomic_features=16,
    p2p_median=[140.0],
    seed=7,
)


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(CohortSpec(**SMALL_SPEC))
