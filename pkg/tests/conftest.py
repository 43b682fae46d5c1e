import sys
import warnings
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tonaldipls import RankDeficiencyWarning, default_suite, evaluate, generate_suite  # noqa: E402
from tonaldipls.cli import DEFAULT_LAMBDA  # noqa: E402
from tonaldipls.evaluation import default_config  # noqa: E402

ACCEPTANCE_LINES = []


@lru_cache(maxsize=None)
def suite_datasets(seed=None):
    suite = default_suite() if seed is None else default_suite(seed=seed)
    return tuple(generate_suite(suite))


@lru_cache(maxsize=None)
def suite_report(model, features, lam=DEFAULT_LAMBDA, seed=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        return evaluate(list(suite_datasets(seed)), model,
                        default_config(lam=lam if model == "dipls" else 0.0), features, jobs=4)


@pytest.fixture
def record_criterion():
    def record(number, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
