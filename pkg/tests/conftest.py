"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import warnings

import numpy as np
import pytest

from estbeam import pipeline
from estbeam.design import build_sdr_problem, solve_sdr
from estbeam.scenario import Scenario

#: criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS = {}


def record_acceptance(number: int, passed: bool, detail: str) -> str:
    line = f"ACCEPTANCE {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[number] = (passed, line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number][1])


@pytest.fixture(scope="session")
def scenario():
    return Scenario.default()


@pytest.fixture(scope="session")
def partition(scenario):
    return pipeline.partition_for(scenario)


@pytest.fixture(scope="session")
def sdr_default(scenario, partition):
    """Relaxed CRB program at the default scenario, solved once per session."""
    problem = build_sdr_problem(partition, scenario.geometry(), scenario.constraints())
    return problem, solve_sdr(problem)


@pytest.fixture(scope="session")
def design_default(scenario):
    """``(BeamformerSet, report)`` of the default CRB design."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return pipeline.run_algorithm_1(scenario)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_psd(rng, n, rank=None, scale=1.0):
    rank = n if rank is None else rank
    G = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    R = G @ G.conj().T
    return scale * R / np.trace(R).real
