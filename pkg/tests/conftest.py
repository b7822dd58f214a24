import json
import pathlib
import warnings

import pytest

from biofilm_xdiff.closures import ModelParams, get_table

FIXTURES = pathlib.Path(__file__).resolve().parent / "fixtures"

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def make_params(a, b, kappa, n=3, alpha=(1.0,)):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ModelParams(a, b, kappa, n, alpha)


@pytest.fixture(scope="session")
def params1():
    return make_params(2, 2, 1)


@pytest.fixture(scope="session")
def params2():
    return make_params(1, 2, 0.9)


@pytest.fixture(scope="session")
def table1(params1):
    return get_table(params1)


@pytest.fixture(scope="session")
def table2(params2):
    return get_table(params2)


@pytest.fixture(scope="session")
def oracle_values():
    return json.loads((FIXTURES / "oracle_values.json").read_text())


@pytest.fixture(scope="session")
def acceptance_line():
    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2d} {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
