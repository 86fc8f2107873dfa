import numpy as np
import pytest

from mscn.distributions import MscnParams


def random_orthogonal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + d * 0.1 * np.eye(d)


def random_params(rng, d, alpha_low=0.5, eta_high=20.0):
    return MscnParams(
        mu=rng.normal(0, 2, d),
        gamma=random_orthogonal(rng, d),
        lam=rng.uniform(0.2, 3.0, d),
        alpha=rng.uniform(alpha_low, 0.99, d),
        eta=rng.uniform(1.05, eta_high, d),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, passed: bool | None, detail: str) -> bool | None:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {number}: {status}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
