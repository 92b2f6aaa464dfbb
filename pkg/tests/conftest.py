import math

import numpy as np
import pytest

from bnsmc.model import ModelParams, paper_params, validate
from bnsmc.errors import AssumptionViolation

# Fixed before any statistical run was looked at; every acceptance run uses it.
ACCEPTANCE_SEED = 1

_acceptance_lines: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    _acceptance_lines[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance_lines):
        terminalreporter.write_line(_acceptance_lines[n])


@pytest.fixture
def P():
    return paper_params()


def random_valid_params(rng: np.random.Generator, rho_zero: bool = False) -> ModelParams:
    """A random parameter vector satisfying both admissibility conditions."""
    while True:
        lam = rng.uniform(0.1, 10.0)
        T = rng.uniform(0.1, 3.0)
        rho = 0.0 if rho_zero else -rng.uniform(0.0, 10.0)
        need = 2.0 * max(-math.expm1(-lam * T) / lam, abs(rho))
        beta = need + rng.uniform(0.5, 200.0)
        p = ModelParams(S0=rng.uniform(10.0, 1000.0), sigma0_sq=rng.uniform(1e-3, 0.2),
                        lam=lam, a=rng.uniform(0.01, 1.0), b=math.sqrt(2.0 * beta), rho=rho,
                        alpha=rng.uniform(0.0, 10.0), T=T)
        try:
            validate(p)
        except AssumptionViolation:
            continue
        return p
