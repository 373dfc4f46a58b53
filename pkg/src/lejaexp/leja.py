"""Leja nodes on [-2, 2] and polynomial interpolation of exp/phi_l actions.

The operator A (given matrix-free) is mapped onto the node interval by
xi <-> (A - c) / gamma. The Newton polynomial of h(xi) = phi_l(dt*(c + gamma*xi))
is then built with

    y_{m+1} = ((A - c)/gamma - xi_m) y_m,   p_{m+1} = p_m + d_{m+1} y_{m+1},

one operator application per step, until the newest term is below
``rtol * ||p|| + atol`` in the sqrt(N)-normalised l2 norm.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from lejaexp import vecops
from lejaexp.phi import NODE_CAP, cached_divided_differences, phi

GRID_RESOLUTION = 1_000_001
NODE_COUNT = NODE_CAP


class LejaConvergenceError(RuntimeError):
    """The node cap was reached before the stopping criterion held."""


class LejaDivergenceError(FloatingPointError):
    """The Newton basis became non-finite: the spectrum is not enclosed."""


@dataclass(frozen=True)
class LejaNodes:
    xi: np.ndarray
    resolution: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.xi.size, self.resolution)

    def __len__(self) -> int:
        return self.xi.size

    def __getitem__(self, k):
        return self.xi[k]


@dataclass(frozen=True)
class InterpolationConfig:
    """Shift ``c`` and scale ``gamma`` of the spectrum, step ``dt``, tolerances.

    ``gamma == 0`` is accepted as the degenerate case of a point spectrum at
    ``c``; the kernels then return ``phi_l(dt*c) * v`` without iterating.
    """

    c: float
    gamma: float
    dt: float
    rtol: float = 1e-12
    atol: float = 0.0

    def __post_init__(self):
        if not (self.rtol > 0 or self.atol > 0):
            raise ValueError("rtol or atol must be positive")
        if not np.isfinite([self.c, self.gamma, self.dt]).all():
            raise ValueError("c, gamma and dt must be finite")


def generate_leja_nodes(count: int, grid_resolution: int = GRID_RESOLUTION) -> np.ndarray:
    """Greedy Leja sequence on a symmetric uniform grid of [-2, 2].

    The grid is ``k * 2/M`` for ``k = -M..M`` with ``M = grid_resolution // 2``,
    so 0 and the endpoints are represented exactly. Ties (within 1e-12 in the
    log-product) go to the most positive candidate.
    """
    if count > 10_000:
        raise ValueError("at most 10000 nodes")
    half = grid_resolution // 2
    if half < 1:
        raise ValueError("grid_resolution too small")
    grid = np.arange(-half, half + 1, dtype=np.float64) * (2.0 / half)
    logprod = np.zeros_like(grid)
    nodes = np.empty(count)
    with np.errstate(divide="ignore"):
        for j in range(count):
            if j == 0:
                k = grid.size - 1  # |z_0| = max |z| = 2; positive endpoint
            else:
                top = logprod.max()
                tied = np.flatnonzero(logprod >= top - 1e-12 * max(1.0, abs(top)))
                k = tied[np.argmax(grid[tied])]
            nodes[j] = grid[k]
            logprod += np.log(np.abs(grid - grid[k]))
    return nodes


def leja_nodes(count: int = NODE_COUNT, resolution: int = GRID_RESOLUTION) -> LejaNodes:
    """Process-wide cached node set (generation takes about two seconds)."""
    return _leja_nodes(int(count), int(resolution))


@lru_cache(maxsize=8)
def _leja_nodes(count: int, resolution: int) -> LejaNodes:
    xi = generate_leja_nodes(count, resolution)
    xi.setflags(write=False)
    return LejaNodes(xi, resolution)


def _interpolate(apply: Callable[[np.ndarray], np.ndarray], v: np.ndarray, l: int,
                 dts: Sequence[float], cfg: InterpolationConfig, nodes: LejaNodes,
                 y: np.ndarray, outs: Sequence[np.ndarray]) -> int:
    """Shared-recurrence interpolation of phi_l(dt_k * A) v into ``outs``.

    ``y`` is the single auxiliary vector carrying the Newton basis.
    Returns the number of recurrence steps (= operator applications).
    """
    if cfg.gamma == 0.0:
        for dt_k, p in zip(dts, outs):
            vecops.scale(phi(l, dt_k * cfg.c), v, out=p)
        return 0

    tables = [cached_divided_differences(l, nodes.key, dt_k, cfg.c, cfg.gamma) for dt_k in dts]
    vecops.copy(v, out=y)
    for table, p in zip(tables, outs):
        vecops.scale(table[0], y, out=p)
    active = list(range(len(tables)))
    inv_gamma = 1.0 / cfg.gamma
    shift = cfg.c / cfg.gamma
    cap = min(len(nodes), tables[0].cap)

    for m in range(cap - 1):
        ay = apply(y)
        vecops.axpby(inv_gamma, ay, -(shift + nodes[m]), y, out=y)
        ynorm = vecops.l2norm_scaled(y)
        if not np.isfinite(ynorm):
            raise LejaDivergenceError(
                f"Newton basis overflowed at iteration {m + 1}; the spectrum "
                "is not enclosed by the shift/scale parameters")
        still = []
        for k in active:
            d = tables[k][m + 1]
            p = outs[k]
            vecops.axpby(d, y, 1.0, p, out=p)
            if abs(d) * ynorm > cfg.rtol * vecops.l2norm_scaled(p) + cfg.atol:
                still.append(k)
        active = still
        if not active:
            return m + 1
    raise LejaConvergenceError(
        f"no convergence with {cap} Leja nodes (dt={cfg.dt:g}, c={cfg.c:g}, "
        f"gamma={cfg.gamma:g}); use a smaller step size")


def _scratch(n, scratch, count):
    if scratch is None:
        return [vecops.empty(n, tag="scratch") for _ in range(count)]
    if len(scratch) < count:
        raise ValueError(f"need {count} scratch vectors, got {len(scratch)}")
    return scratch


def _output(n, out):
    return vecops.empty(n, tag="output") if out is None else out


def _counted(fn):
    def apply(x):
        vecops.record(reads=1, writes=1)
        return fn(x)
    return apply


def real_leja_exp(rhs, u, cfg: InterpolationConfig, nodes: LejaNodes | None = None,
                  out=None, scratch=None):
    """Approximate exp(A*dt) u for a linear homogeneous ``rhs(x) = A x``.

    Returns ``(polynomial, iters)``.
    """
    u = vecops.as_state(u, "u")
    nodes = nodes or leja_nodes()
    (y,) = _scratch(u.size, scratch, 1)
    p = _output(u.size, out)
    iters = _interpolate(_counted(rhs), u, 0, [cfg.dt], cfg, nodes, y, [p])
    return p, iters


def real_leja_phi_nl(rhs, interp_vector, l: int, cfg: InterpolationConfig,
                     nodes: LejaNodes | None = None, out=None, scratch=None):
    """Approximate phi_l(A*dt) v for a linear ``rhs(x) = A x``.

    Nonhomogeneous sources are folded into ``interp_vector`` by the caller.
    Returns ``(polynomial, iters)``.
    """
    v = vecops.as_state(interp_vector, "interp_vector")
    nodes = nodes or leja_nodes()
    (y,) = _scratch(v.size, scratch, 1)
    p = _output(v.size, out)
    iters = _interpolate(_counted(rhs), v, l, [cfg.dt], cfg, nodes, y, [p])
    return p, iters


def real_leja_phi(rhs, u, interp_vector, coeffs: Sequence[float], l: int,
                  cfg: InterpolationConfig, nodes: LejaNodes | None = None,
                  out=None, scratch=None, f_u=None):
    """Approximate phi_l(a_k * J(u) * dt) v for every stage fraction a_k at once.

    The Newton basis depends only on J(u), so one recurrence serves all
    ``coeffs``; each keeps its own coefficient table and accumulator and is
    frozen once converged. J(u) y is obtained with :func:`jacobian.jac_vec`.

    ``scratch`` holds four vectors: the Newton basis, f(u), and two for the
    Jacobian action. Returns ``(polynomials, iters)``.
    """
    from lejaexp.jacobian import jac_vec

    coeffs = [float(a) for a in coeffs]
    if not coeffs:
        raise ValueError("coeffs must not be empty")
    if any(b <= a for a, b in zip(coeffs, coeffs[1:])):
        raise ValueError(f"coeffs must be strictly increasing, got {coeffs}")
    u = vecops.as_state(u, "u")
    v = vecops.as_state(interp_vector, "interp_vector")
    vecops._check(u, v)
    nodes = nodes or leja_nodes()
    y, fu_buf, w_buf, jv_buf = _scratch(u.size, scratch, 4)
    if getattr(rhs, "linear_part", None) is None:
        if f_u is None:
            vecops.record(reads=1, writes=1)
            f_u = vecops.copy(rhs(u), out=fu_buf)
    if out is None:
        out = [vecops.empty(u.size, tag="output") for _ in coeffs]
    elif len(out) != len(coeffs):
        raise ValueError("one output vector per coefficient is required")

    def apply(x):
        return jac_vec(rhs, u, x, f_u=f_u, out=jv_buf, work=w_buf)

    iters = _interpolate(apply, v, l, [a * cfg.dt for a in coeffs], cfg, nodes, y, out)
    return list(out), iters
