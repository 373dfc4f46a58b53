import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lejaexp import cli, problems as P
from lejaexp.jacobian import jac_vec
from lejaexp.vecops import DimensionError


def grid_value(vec, grid, x, y):
    i = round((x + 1) / grid.dx)
    j = round((y + 1) / grid.dy)
    return vec[i * grid.ny + j]


def field(n, fn):
    g = P.Grid2D(n, n)
    x, y = g.mesh()
    return g, fn(x, y).reshape(-1)


def test_grid_layout():
    g = P.Grid2D(8, 16)
    assert (g.dx, g.dy, g.size) == (0.25, 0.125, 128)
    x, y = g.mesh()
    assert x[0, 0] == -1.0 and x[1, 0] == -0.75 and y[0, 1] == -0.875
    with pytest.raises(ValueError):
        P.Grid2D(4, 16)


def test_initial_conditions():
    spec = P.make_spec("diff-adv", 20)
    u = P.initial_condition(spec)
    assert grid_value(u, spec.grid, -0.5, -0.5) == 2.0
    assert grid_value(u, spec.grid, 0.9, 0.9) == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(u, P.initial_condition(P.make_spec("diff-adv-source", 20)))
    b = P.initial_condition(P.make_spec("burgers", 20))
    # 2 + 1e-2 (2 sin 0.3)
    assert grid_value(b, spec.grid, 0.0, 0.0) == pytest.approx(2.0059104041332, rel=1e-13)


def test_source_term():
    spec = P.make_spec("diff-adv-source", 20)
    rhs = P.rhs_diff_adv_source(spec)
    assert np.array_equal(rhs(np.zeros(spec.grid.size)), rhs.source)
    assert grid_value(rhs.source, spec.grid, -0.4, 0.6) == pytest.approx(1.0 + math.exp(-22.8125),
                                                                          rel=1e-15)


def test_affine_consistency(rng):
    spec = P.make_spec("diff-adv-source", 16)
    rhs = P.rhs_diff_adv_source(spec)
    u = rng.standard_normal(spec.grid.size)
    np.testing.assert_allclose(rhs(u) - rhs(np.zeros_like(u)), rhs.linear_part(u),
                               rtol=1e-12, atol=1e-9)
    assert np.array_equal(rhs.affine_vector(u), rhs(u))


@pytest.mark.parametrize("kind", ["diff-adv", "diff-adv-source", "burgers"])
def test_dimension_mismatch(kind):
    rhs = P.make_rhs(P.make_spec(kind, 8))
    with pytest.raises(DimensionError):
        rhs(np.ones(65))


@pytest.mark.parametrize("kind", ["diff-adv", "burgers"])
def test_constants_map_to_zero(kind):
    spec = P.make_spec(kind, 16)
    out = P.make_rhs(spec)(np.full(spec.grid.size, 3.7))
    assert np.max(np.abs(out)) <= 1e-9


def test_diffusion_symbol():
    n = 32
    g, u = field(n, lambda x, y: np.sin(2 * np.pi * x))
    lap = P.rhs_diff_adv(P.ProblemSpec(P.Kind.DIFF_ADV, g, 0.0))(u)
    sym = -(2 - 2 * np.cos(2 * np.pi * g.dx)) / g.dx**2
    np.testing.assert_allclose(lap, sym * u, atol=1e-10)
    # second-order approach to -4 pi^2
    assert abs(sym + 4 * np.pi**2) <= (2 * np.pi) ** 4 * g.dx**2 / 12 * 1.01


@settings(max_examples=20)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    rhs = P.rhs_diff_adv(P.make_spec("diff-adv", 16))
    u, v = rng.standard_normal(256), rng.standard_normal(256)
    lhs = rhs(a * u + b * v)
    scale = np.max(np.abs(rhs(u))) + np.max(np.abs(rhs(v)))
    assert np.max(np.abs(lhs - (a * rhs(u) + b * rhs(v)))) <= 1e-12 * scale


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_periodic_conservation(seed):
    u = np.random.default_rng(seed).uniform(-5, 5, 32 * 32)
    out = P.rhs_diff_adv(P.make_spec("diff-adv", 32))(u)
    assert abs(out.sum()) <= 1e-10 * u.size * np.max(np.abs(u))


def slope(ns, errs):
    return -np.polyfit(np.log(ns), np.log(errs), 1)[0]


def test_stencil_refinement_orders():
    ns = [32, 64, 128, 256]
    dif, adv = [], []
    for n in ns:
        g, u = field(n, lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
        x, y = g.mesh()
        u2 = u.reshape(n, n)
        lap_exact = -8 * np.pi**2 * u2
        dx_exact = 2 * np.pi * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)
        dif.append(np.max(np.abs(P.laplacian(u2, g.dx, g.dy) - lap_exact)))
        adv.append(np.max(np.abs(P.upwind3(u2, g.dx, 0, 10.0) - dx_exact)))
    assert slope(ns, dif) == pytest.approx(2.0, abs=0.1)
    assert slope(ns, adv) == pytest.approx(3.0, abs=0.15)


@pytest.mark.parametrize("speed", [10.0, -10.0])
def test_upwind_is_dissipative(speed):
    spec = P.ProblemSpec(P.Kind.DIFF_ADV, P.Grid2D(32, 32), speed)
    sym = P.rhs_diff_adv(spec).symbol()
    assert sym.real.max() <= 1e-9 * np.abs(sym).max()


def test_symbol_diagonalises_operator(rng):
    rhs = P.rhs_diff_adv(P.make_spec("diff-adv", 16))
    u = rng.standard_normal(256)
    spectral = np.fft.ifft2(np.fft.fft2(u.reshape(16, 16)) * rhs.symbol()).real
    np.testing.assert_allclose(rhs(u).reshape(16, 16), spectral, atol=1e-9)


def test_burgers_refinement():
    ns = [32, 64, 128, 256]
    dif, flux = [], []
    for n in ns:
        g, u = field(n, lambda x, y: 2 + 0.5 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
        x, y = g.mesh()
        s = 0.5 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
        ux = np.pi * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)
        uy = np.pi * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
        u2 = u.reshape(n, n)
        lap_exact = -8 * np.pi**2 * s
        flux_exact = 10.0 * u2 * (ux + uy)
        total = P.rhs_burgers(P.ProblemSpec(P.Kind.BURGERS, g, 10.0))(u).reshape(n, n)
        lap = P.laplacian(u2, g.dx, g.dy)
        dif.append(np.max(np.abs(lap - lap_exact)))
        flux.append(np.max(np.abs(total - lap - flux_exact)))
    assert slope(ns, dif) == pytest.approx(2.0, abs=0.1)
    assert slope(ns, flux) == pytest.approx(3.0, abs=0.15)


def test_burgers_jacobian_action(rng):
    spec = P.make_spec("burgers", 32)
    g = spec.grid
    rhs = P.rhs_burgers(spec)
    u = P.initial_condition(spec)
    v = rng.standard_normal(g.size)
    w = (u * v).reshape(32, 32)
    exact = (P.laplacian(v.reshape(32, 32), g.dx, g.dy)
             + 10.0 * (P.upwind3(w, g.dx, 0, 10.0) + P.upwind3(w, g.dy, 1, 10.0))).reshape(-1)
    approx = jac_vec(rhs, u, v)
    assert np.linalg.norm(approx - exact) <= 1e-6 * np.linalg.norm(exact)


def test_cfl():
    assert P.cfl_dt(P.make_spec("diff-adv", 256)) == pytest.approx(1.52587890625e-05, rel=1e-15)
    assert P.cfl_dt(P.make_spec("diff-adv", 256, nu=0.0)) == (2 / 256) ** 2 / 4
    ratio = P.cfl_dt(P.make_spec("diff-adv", 128)) / P.cfl_dt(P.make_spec("diff-adv", 256))
    assert ratio == pytest.approx(4.0, rel=1e-15)
    # advective limit binds on coarse grids with fast advection
    assert P.cfl_dt(P.make_spec("diff-adv", 8, nu=1000.0)) == 0.25 / 1000.0


def test_rosenbrock_euler_stays_within_initial_bounds():
    spec = P.make_spec("diff-adv", 32)
    u0 = P.initial_condition(spec)
    lo, hi = u0.min() - 1e-6, u0.max() + 1e-6
    engine = cli.Engine(spec, "Rosenbrock_Euler", rtol=1e-12)
    dt = 10 * P.cfl_dt(spec)
    for _ in range(500):
        engine.advance(dt)
        assert lo <= engine.state.min() and engine.state.max() <= hi
