"""Shared fixtures: the canonical geometric Brownian motion instance.

Session scope keeps the threshold solve and the ODE-mode construction from
being repeated across test modules.
"""

import pytest

from supctrl.config import load_config
from supctrl.stopping import StoppingProblem

CONFIG_PATH = "configs/gbm_example.cfg"


@pytest.fixture(scope="session")
def config():
    return load_config(CONFIG_PATH)


@pytest.fixture(scope="session")
def problem(config):
    return config.build_problem()


@pytest.fixture(scope="session")
def solution(problem):
    return problem.solve_threshold()


@pytest.fixture(scope="session")
def stopping(solution):
    return StoppingProblem(solution)


@pytest.fixture(scope="session")
def generic_problem(config):
    return config.build_problem(force_generic=True)


@pytest.fixture(scope="session")
def generic_solution(generic_problem):
    return generic_problem.solve_threshold()
