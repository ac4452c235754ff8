"""Shared fixtures; the heavyweight convergence studies are session-scoped
so the acceptance criteria can share a single run."""

import time

import numpy as np
import pytest

from dgoc import StudyConfig, example_square, run_convergence


def _quiet(*args, **kwargs):
    pass


@pytest.fixture(scope="session")
def square_spec():
    return example_square()


@pytest.fixture(scope="session")
def square_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study_square")
    cfg = StudyConfig(problem="square", levels=(1, 6), out_dir=str(out))
    t0 = time.time()
    report = run_convergence(cfg, log=_quiet)
    return report, time.time() - t0


@pytest.fixture(scope="session")
def lshape_uniform_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study_lu")
    cfg = StudyConfig(problem="lshape-uniform", levels=(1, 6),
                      out_dir=str(out), figures=False)
    t0 = time.time()
    report = run_convergence(cfg, log=_quiet)
    return report, time.time() - t0


@pytest.fixture(scope="session")
def lshape_graded_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study_lg")
    cfg = StudyConfig(problem="lshape-graded", levels=(1, 6),
                      out_dir=str(out), figures=False)
    t0 = time.time()
    report = run_convergence(cfg, log=_quiet)
    return report, time.time() - t0


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


CRITERION_LINES = []


def record_criterion(number, ok, detail):
    """Register one acceptance-criterion verdict and echo it immediately."""
    line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERION_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
