import numpy as np
import pytest

from clsynth.iop import IOP
from clsynth.sls import SLS, H2Objective
from clsynth.systems import LTISystem, make_chain


@pytest.fixture(scope="session")
def chain():
    return make_chain(10)


@pytest.fixture(scope="session")
def chain_sf(chain):
    return SLS("sf", 20).solve(chain)


@pytest.fixture(scope="session")
def chain_of(chain):
    return SLS("of", 20, [H2Objective()]).solve(chain)


@pytest.fixture(scope="session")
def chain_iop(chain):
    return IOP(20).solve(chain)


def random_of_system(seed, n_x=4, n_u=2, n_y=3, D22=False):
    """Small output-feedback plant with independent process and sensor channels."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n_x, n_x))
    A *= 0.9 / max(abs(np.linalg.eigvals(A)))
    return LTISystem(
        A=A,
        B2=rng.standard_normal((n_x, n_u)),
        B1=np.hstack([np.eye(n_x), np.zeros((n_x, n_y))]),
        C1=np.vstack([np.eye(n_x), np.zeros((n_u, n_x))]),
        D12=np.vstack([np.zeros((n_x, n_u)), np.eye(n_u)]),
        C2=rng.standard_normal((n_y, n_x)),
        D21=np.hstack([np.zeros((n_y, n_x)), 0.3 * np.eye(n_y)]),
        D22=0.2 * rng.standard_normal((n_y, n_u)) if D22 else None,
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
