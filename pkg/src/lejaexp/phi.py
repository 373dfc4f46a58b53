"""Scalar phi functions and Newton divided differences over Leja nodes.

``phi(l, z)`` follows phi_0 = exp, phi_{l+1}(z) = (phi_l(z) - 1/l!) / z.
Near z = 0 the recursion cancels catastrophically, so a Taylor series is used
there instead.
"""
from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np

MAX_ORDER = 4
NODE_CAP = 300
# |z| below this uses the Taylor series; above it the recursion loses at most
# ~20 ulp for l <= 4.
TAYLOR_RADIUS = 2.0
_TAYLOR_TERMS = 32
EXTENDED_DPS = 34


class UnsupportedOrderError(ValueError):
    pass


def _check_order(l: int) -> int:
    if int(l) != l or l < 0 or l > MAX_ORDER:
        raise UnsupportedOrderError(f"phi order must be an integer in 0..{MAX_ORDER}, got {l}")
    return int(l)


def phi(l: int, z):
    """Evaluate phi_l at a real scalar or array ``z``."""
    l = _check_order(l)
    zarr = np.asarray(z, dtype=np.float64)
    if l == 0:
        out = np.exp(zarr)
        return float(out) if out.ndim == 0 else out

    small = np.abs(zarr) < TAYLOR_RADIUS
    out = np.empty_like(zarr)
    if small.any():
        zs = zarr[small]
        # Horner on sum_k z^k / (k + l)!
        acc = np.full_like(zs, 1.0 / math.factorial(_TAYLOR_TERMS + l))
        for k in range(_TAYLOR_TERMS - 1, -1, -1):
            acc = acc * zs + 1.0 / math.factorial(k + l)
        out[small] = acc
    big = ~small
    if big.any():
        zb = zarr[big]
        val = np.expm1(zb) / zb
        for j in range(1, l):
            val = (val - 1.0 / math.factorial(j)) / zb
        out[big] = val
    return float(out) if out.ndim == 0 else out


def phi_mp(l: int, z) -> mpmath.mpf:
    """phi_l(z) at the current mpmath working precision."""
    l = _check_order(l)
    z = mpmath.mpf(z)
    if l == 0:
        return mpmath.exp(z)
    if abs(z) < TAYLOR_RADIUS:
        eps = mpmath.eps
        term = mpmath.mpf(1) / mpmath.factorial(l)
        total = term
        k = 0
        while abs(term) > eps * abs(total):
            k += 1
            term = term * z / (k + l)
            total += term
        return total
    # Direct formula with guard digits to absorb the subtraction.
    with mpmath.extradps(10 + l):
        partial = mpmath.fsum(z**k / mpmath.factorial(k) for k in range(l))
        return (mpmath.exp(z) - partial) / z**l


class DividedDifferences:
    """Newton divided differences of h(xi) = phi_l(dt * (c + gamma * xi)).

    Coefficients are produced lazily: asking for ``d[m]`` extends the table
    by one row per new node, reusing every previous row. All arithmetic is
    carried out with ``dps`` decimal digits and rounded to float64 on output.
    """

    def __init__(self, l: int, nodes, dt: float, c: float, gamma: float,
                 dps: int = EXTENDED_DPS, cap: int = NODE_CAP):
        self.l = _check_order(l)
        self.dt, self.c, self.gamma = float(dt), float(c), float(gamma)
        if gamma == 0 and dt != 0:
            raise ValueError("gamma must be nonzero unless dt == 0")
        self.nodes = np.asarray(nodes, dtype=np.float64)
        self.cap = min(cap, self.nodes.size)
        self.dps = dps
        self._xi = []
        self._row = []
        self._d: list[float] = []

    @property
    def nodes_used(self) -> int:
        return len(self._d)

    @property
    def d(self) -> np.ndarray:
        return np.array(self._d)

    def _h(self, xi):
        with mpmath.workdps(self.dps):
            arg = mpmath.mpf(self.dt) * (mpmath.mpf(self.c) + mpmath.mpf(self.gamma) * xi)
            return phi_mp(self.l, arg)

    def extend(self, m: int) -> None:
        """Make d_0..d_m available."""
        if m >= self.cap:
            raise IndexError(f"divided difference {m} exceeds the node cap {self.cap}")
        with mpmath.workdps(self.dps):
            while len(self._d) <= m:
                j = len(self._xi)
                xj = mpmath.mpf(float(self.nodes[j]))
                new = [None] * (j + 1)
                new[j] = self._h(xj)
                for k in range(j - 1, -1, -1):
                    new[k] = (new[k + 1] - self._row[k]) / (xj - self._xi[k])
                self._xi.append(xj)
                self._row = new
                val = float(new[0])
                if not math.isfinite(val):
                    raise OverflowError(
                        f"divided difference {j} of phi_{self.l} is not finite; "
                        f"dt*(c + gamma*xi) = {float(self.dt * (self.c + self.gamma * xj)):.6g} "
                        "is out of range")
                self._d.append(val)

    def __getitem__(self, m: int) -> float:
        if m < 0:
            raise IndexError(m)
        self.extend(m)
        return self._d[m]

    def __len__(self) -> int:
        return self.cap


@lru_cache(maxsize=256)
def _cached(l, nodes_key, dt, c, gamma, dps):
    from lejaexp.leja import leja_nodes
    return DividedDifferences(l, leja_nodes(*nodes_key), dt, c, gamma, dps=dps)


def cached_divided_differences(l: int, nodes_key: tuple, dt: float, c: float,
                               gamma: float, dps: int = EXTENDED_DPS) -> DividedDifferences:
    """Shared coefficient table for nodes identified by ``(count, resolution)``.

    Tables only ever grow and their existing entries never change, so sharing
    across kernels is safe.
    """
    return _cached(int(l), tuple(nodes_key), float(dt), float(c), float(gamma), dps)


def divided_differences(l: int, nodes, dt: float, c: float, gamma: float,
                        m: int | None = None, dps: int = EXTENDED_DPS) -> np.ndarray:
    """Return d_0..d_m (all nodes when ``m`` is None) as a float64 array."""
    table = DividedDifferences(l, nodes, dt, c, gamma, dps=dps, cap=len(nodes))
    table.extend(len(nodes) - 1 if m is None else m)
    return table.d
