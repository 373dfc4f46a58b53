import numpy as np
import pytest
from scipy.linalg import expm

from conftest import DenseLinear, random_spd_negative, rel_err
from lejaexp import integrators as I, vecops
from lejaexp.jacobian import power_iterations, spectrum_to_leja

ALL = list(I.REGISTRY)
EXPECTED_AUX = {"Rosenbrock_Euler": 1, "EXPRB32": 1, "EXPRB42": 2, "EXPRB43": 2,
                "EXPRB53s3": 3, "EXPRB54s4": 4, "EPIRK4s3": 3, "EPIRK4s3A": 3,
                "EPIRK4s3B": 3, "EPIRK5P1": 4}


def spectrum(rhs, u):
    return spectrum_to_leja(power_iterations(rhs, u))


def context(name, n):
    return I.SolverContext(n, name, allow_disabled=True)


class _Quadratic:
    """f(u) = A u - u^2 elementwise, a stiff nonlinear test system."""

    def __init__(self, a):
        self.a = a

    def __call__(self, x):
        return self.a @ x - x * x


class Zero:
    def __call__(self, x):
        return np.zeros_like(x)


@pytest.fixture(scope="module")
def dense_problem():
    rng = np.random.default_rng(7)
    a = random_spd_negative(rng, 64, lo=1.0, hi=400.0)
    u = rng.standard_normal(64)
    return DenseLinear(a), u, 0.01, expm(0.01 * a) @ u


# --- registry ---------------------------------------------------------------------

def test_registry_contents():
    assert ALL == list(EXPECTED_AUX)
    for name, aux in EXPECTED_AUX.items():
        assert I.REGISTRY[name].num_aux_vectors == aux


def test_unknown_name_is_registry_error():
    with pytest.raises(I.RegistryError, match="EXPRB32"):
        I.step("NoSuchMethod", Zero(), np.ones(3), 0.1, spectrum_to_leja(1.0))


def test_names_are_case_insensitive():
    assert I.canonical_name("rosenbrock-euler") == "Rosenbrock_Euler"
    assert I.canonical_name("exprb54S4") == "EXPRB54s4"


@pytest.mark.parametrize("name", [n for n in ALL if not I.REGISTRY[n].enabled])
def test_disabled_methods_need_opt_in(name):
    with pytest.raises(I.RegistryError, match="disabled"):
        I.SolverContext(4, name)
    assert I.SolverContext(4, name, allow_disabled=True).descriptor.name == name


def test_dispatch_is_bitwise_identical(rng):
    a = random_spd_negative(rng, 32, hi=100.0)
    rhs = _Quadratic(a)
    u = 1 + 0.1 * rng.standard_normal(32)
    s = spectrum(rhs, u)
    for name, fn in (("Rosenbrock_Euler", I.ros_eu), ("EXPRB32", I.exprb32)):
        r1, r2 = I.step(name, rhs, u, 0.02, s), fn(rhs, u, 0.02, s)
        assert np.array_equal(r1.u_high, r2.u_high) and r1.iters == r2.iters
        assert r1.error == r2.error


def test_context_must_match_name():
    ctx = I.SolverContext(4, "EXPRB32")
    with pytest.raises(I.RegistryError):
        I.step("EXPRB42", Zero(), np.ones(4), 0.1, spectrum_to_leja(1.0), context=ctx)


def test_context_size_is_checked():
    with pytest.raises(vecops.DimensionError):
        I.SolverContext(4, "EXPRB32").step(Zero(), np.ones(5), 0.1, spectrum_to_leja(1.0))


# --- per-method contracts ---------------------------------------------------------

@pytest.mark.parametrize("name", ALL)
def test_zero_rhs_is_identity(name):
    u = np.linspace(-1, 1, 16)
    rhs = Zero()
    res = context(name, 16).step(rhs, u, 0.3, spectrum(rhs, u))
    assert np.array_equal(res.u_high, u)
    assert res.error == 0.0
    if I.REGISTRY[name].embedded:
        assert np.array_equal(res.u_low, u)


@pytest.mark.parametrize("name", ALL)
def test_linear_exactness(name, dense_problem):
    rhs, u, dt, exact = dense_problem
    rtol = 1e-12
    res = context(name, u.size).step(rhs, u, dt, spectrum(rhs, u), rtol=rtol)
    assert rel_err(res.u_high, exact) <= 10 * rtol
    if I.REGISTRY[name].embedded:
        assert res.error <= 1e-7 * vecops.l2norm_scaled(u)


@pytest.mark.parametrize("name", ALL)
def test_result_shape(name, rng):
    rhs = _Quadratic(random_spd_negative(rng, 20, hi=50.0))
    u = 1 + 0.1 * rng.standard_normal(20)
    res = context(name, 20).step(rhs, u, 0.05, spectrum(rhs, u))
    if I.REGISTRY[name].embedded:
        diff = vecops.l2norm_scaled(res.u_high - res.u_low)
        assert res.error == pytest.approx(diff, rel=1e-13)
        assert res.error > 0
    else:
        assert res.u_low is None and res.error == 0.0


@pytest.mark.parametrize("name", ALL)
def test_iters_is_sum_of_kernel_counts(name, rng, monkeypatch):
    counts = []
    real = I.real_leja_phi

    def counting(*args, **kwargs):
        out, it = real(*args, **kwargs)
        counts.append(it)
        return out, it
    monkeypatch.setattr(I, "real_leja_phi", counting)
    rhs = _Quadratic(random_spd_negative(rng, 16, hi=50.0))
    u = 1 + 0.1 * rng.standard_normal(16)
    res = context(name, 16).step(rhs, u, 0.05, spectrum(rhs, u))
    assert res.iters == sum(counts) and counts


@pytest.mark.parametrize("name", ALL)
def test_buffer_budget(name, rng):
    rhs = _Quadratic(random_spd_negative(rng, 16, hi=50.0))
    u = 1 + 0.1 * rng.standard_normal(16)
    s = spectrum(rhs, u)
    with vecops.count_traffic() as t:
        ctx = context(name, 16)
    assert t.allocations == {"aux": EXPECTED_AUX[name], "scratch": I.NUM_SCRATCH}
    outs = dict(u_high=np.empty(16), u_low=np.empty(16))
    with vecops.count_traffic() as t:
        for _ in range(3):
            ctx.step(rhs, u, 0.05, s, **outs)
    assert t.allocations == {}
    with vecops.count_traffic() as t:
        ctx.step(rhs, u, 0.05, s)
    assert set(t.allocations) == {"output"}


# --- accuracy on nonlinear problems -------------------------------------------------

def rk4(f, u, dt, steps):
    for _ in range(steps):
        k1 = f(u)
        k2 = f(u + 0.5 * dt * k1)
        k3 = f(u + 0.5 * dt * k2)
        k4 = f(u + dt * k3)
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


def test_rosenbrock_euler_scalar_ode():
    def f(x):
        return -x * x
    ref = rk4(f, np.array([1.0]), 1e-4, 10_000)
    assert ref[0] == pytest.approx(0.5, rel=1e-13)
    ctx = I.SolverContext(1, "Rosenbrock_Euler")
    u = np.array([1.0])
    for _ in range(100):
        u = ctx.step(f, u, 0.01, spectrum(f, u)).u_high.copy()
    assert abs(u[0] - ref[0]) <= 1e-4


def small_system(u):
    x, y, z = u
    return np.array([-0.5 * x + x * y - 0.1 * z * z,
                     -y + 0.5 * x * x - 0.2 * y * z,
                     -2 * z + x * y])


@pytest.fixture(scope="module")
def small_system_reference():
    return rk4(small_system, np.array([1.0, 0.8, 0.3]), 1e-3, 1000)


@pytest.mark.filterwarnings("ignore::lejaexp.jacobian.EstimationWarning")
@pytest.mark.parametrize("name", ALL)
def test_classical_order_on_small_system(name, small_system_reference):
    # Non-stiff limit: every tableau must show its nominal order. Coarse steps
    # keep the errors well above the finite-difference floor (~1e-10 here).
    desc = I.REGISTRY[name]
    errs = []
    for steps in (4, 8):
        ctx = context(name, 3)
        u = np.array([1.0, 0.8, 0.3])
        for _ in range(steps):
            s = spectrum_to_leja(power_iterations(small_system, u))
            u = ctx.step(small_system, u, 1.0 / steps, s, rtol=1e-14).u_high.copy()
        errs.append(np.linalg.norm(u - small_system_reference))
    order = np.log2(errs[0] / errs[1])
    assert desc.order_high - 0.5 < order < desc.order_high + 0.65
