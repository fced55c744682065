import numpy as np
import pytest

from locsync.lattice import BoundaryKind, CouplingKind
from locsync.model import builtin_spec


@pytest.fixture(scope="session")
def quintic():
    return builtin_spec("quintic")


@pytest.fixture(scope="session")
def quintic_rotating():
    return builtin_spec("quintic_rotating")


@pytest.fixture(scope="session")
def hbm():
    return builtin_spec("hbm")


@pytest.fixture(scope="session")
def couplings():
    return (CouplingKind.dissipative(), CouplingKind.conservative())


@pytest.fixture(scope="session")
def boundaries():
    return (BoundaryKind.OFF_SITE, BoundaryKind.ON_SITE)


def quintic_roots(mu):
    """Closed-form roots r_pm^2 = 1 pm sqrt(1 - mu); the test-side oracle."""
    s = np.sqrt(1.0 - mu)
    return np.sqrt(1.0 - s), np.sqrt(1.0 + s)
