import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.linalg import expm

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class DenseLinear:
    """x -> A x with an exact Jacobian hook."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)

    def __call__(self, x):
        return self.a @ x

    @property
    def linear_part(self):
        return self


class DenseFD:
    """x -> A x seen only as a black box (Jacobian by finite differences)."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)

    def __call__(self, x):
        return self.a @ x


def random_spd_negative(rng, n, lo=1e-1, hi=1e3):
    """Symmetric negative-definite matrix with eigenvalues in [-hi, -lo]."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = -np.exp(rng.uniform(np.log(lo), np.log(hi), n))
    lam[0] = -hi
    return (q * lam) @ q.T


def phi_dense(z, v, l):
    """phi_l(Z) v via the exponential of an augmented block matrix."""
    n = z.shape[0]
    if l == 0:
        return expm(z) @ v
    m = np.zeros((n + l, n + l))
    m[:n, :n] = z
    m[:n, n] = v
    for i in range(l - 1):
        m[n + i, n + i + 1] = 1.0
    return expm(m)[:n, n + l - 1]


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture(scope="session")
def nodes():
    from lejaexp.leja import leja_nodes
    return leja_nodes()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
