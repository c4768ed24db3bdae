import math

import pytest

from dgreedy.parametric_problem import (
    ParameterDomain,
    build_cd_problem,
    build_transport_problem,
    cover_pieces,
)
from dgreedy.greedy_driver import TruthSnapshots

ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def acceptance_report():
    def _report(number, ok, detail):
        ACCEPTANCE_RESULTS.append((number, ok, detail))
        assert ok, f"criterion {number}: {detail}"

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        )


@pytest.fixture(scope="session")
def small_domain():
    return ParameterDomain(interval=(0.2, math.pi / 2), sample_count=20)


@pytest.fixture(scope="session")
def small_piece(small_domain):
    return cover_pieces(small_domain)[0]


@pytest.fixture(scope="session")
def transport_small(small_piece):
    return build_transport_problem(2, 3, small_piece)


@pytest.fixture(scope="session")
def transport_mid(small_piece):
    return build_transport_problem(3, 4, small_piece)


@pytest.fixture(scope="session")
def cd_small(small_piece):
    return build_cd_problem(2.0 ** -5, 1e-2, 3, 4, small_piece)


@pytest.fixture(scope="session")
def transport_snapshots(transport_small, small_domain):
    return TruthSnapshots(transport_small, small_domain.samples)


@pytest.fixture(scope="session")
def cd_snapshots(cd_small, small_domain):
    return TruthSnapshots(cd_small, small_domain.samples)
