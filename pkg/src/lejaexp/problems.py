"""Two-dimensional periodic benchmark problems on [-1, 1] x [-1, 1].

State vectors are row-major over (x, y): index ``i * ny + j`` holds the value
at ``x_i = -1 + i*dx``, ``y_j = -1 + j*dy``. Second derivatives use the
centred 3-point stencil, first derivatives a third-order upwind stencil whose
bias follows the sign of the advection coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from scipy import ndimage

from lejaexp import vecops


class Kind(str, Enum):
    DIFF_ADV = "diff-adv"
    DIFF_ADV_SOURCE = "diff-adv-source"
    BURGERS = "burgers"


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError("at least 8 points per dimension")

    @property
    def dx(self) -> float:
        return 2.0 / self.nx

    @property
    def dy(self) -> float:
        return 2.0 / self.ny

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def mesh(self):
        x = -1.0 + np.arange(self.nx) * self.dx
        y = -1.0 + np.arange(self.ny) * self.dy
        return np.meshgrid(x, y, indexing="ij")


@dataclass(frozen=True)
class ProblemSpec:
    kind: Kind
    grid: Grid2D
    nu: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not np.isfinite(self.nu):
            raise ValueError("nu must be finite")


def make_spec(kind: str, n: int, nu: float = 10.0) -> ProblemSpec:
    return ProblemSpec(Kind(kind), Grid2D(n, n), nu)


# --- stencils ---------------------------------------------------------------

def _upwind_weights(h: float, speed: float) -> dict[int, float]:
    # offset k -> weight of u[i+k]
    if speed >= 0:
        w = {2: -1.0, 1: 6.0, 0: -3.0, -1: -2.0}
    else:
        w = {1: 2.0, 0: 3.0, -1: -6.0, -2: 1.0}
    return {k: v / (6.0 * h) for k, v in w.items()}


def _diffusion_weights(h: float) -> dict[int, float]:
    return {1: 1.0 / h**2, 0: -2.0 / h**2, -1: 1.0 / h**2}


def _combine(*weights: dict[int, float], scales=None) -> dict[int, float]:
    out: dict[int, float] = {}
    for w, s in zip(weights, scales or [1.0] * len(weights)):
        for k, v in w.items():
            out[k] = out.get(k, 0.0) + s * v
    return out


def stencil_kernel(wx: dict[int, float], wy: dict[int, float]) -> np.ndarray:
    """5x5 correlation kernel for per-axis offset weights (offsets within +-2)."""
    k = np.zeros((5, 5))
    for off, w in wx.items():
        k[2 + off, 2] += w
    for off, w in wy.items():
        k[2, 2 + off] += w
    return k


def apply_stencil(u2: np.ndarray, wx: dict[int, float], wy: dict[int, float]) -> np.ndarray:
    """sum_k wx[k] u[i+k, j] + sum_k wy[k] u[i, j+k] on the periodic grid."""
    return ndimage.correlate(u2, stencil_kernel(wx, wy), mode="wrap")


def laplacian(u2: np.ndarray, dx: float, dy: float) -> np.ndarray:
    return apply_stencil(u2, _diffusion_weights(dx), _diffusion_weights(dy))


def upwind3(u2: np.ndarray, h: float, axis: int, speed: float) -> np.ndarray:
    """Third-order upwind first derivative along ``axis``.

    ``speed`` is the coefficient multiplying the derivative in du/dt; for
    speed >= 0 information arrives from larger indices, so the stencil leans
    that way: (-u[i+2] + 6u[i+1] - 3u[i] - 2u[i-1]) / 6h. Otherwise the
    mirror image (2u[i+1] + 3u[i] - 6u[i-1] + u[i-2]) / 6h.
    """
    w = _upwind_weights(h, speed)
    return apply_stencil(u2, w, {}) if axis == 0 else apply_stencil(u2, {}, w)


# --- operators --------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionAdvection:
    """A u = lap(u) + nu (u_x + u_y); linear and homogeneous."""

    grid: Grid2D
    nu: float = 10.0

    def __call__(self, u: np.ndarray) -> np.ndarray:
        g = self.grid
        if u.shape != (g.size,):
            raise vecops.DimensionError(f"expected length {g.size}, got {u.shape}")
        return ndimage.correlate(u.reshape(g.nx, g.ny), self._kernel, mode="wrap").reshape(-1)

    @cached_property
    def _kernel(self) -> np.ndarray:
        g = self.grid
        wx, wy = (_combine(_diffusion_weights(h), _upwind_weights(h, self.nu),
                           scales=[1.0, self.nu]) for h in (g.dx, g.dy))
        return stencil_kernel(wx, wy)

    @property
    def linear_part(self):
        return self

    def symbol(self) -> np.ndarray:
        """Eigenvalues of the discrete operator on the (nx, ny) Fourier grid."""
        g = self.grid
        tx = 2 * np.pi * np.fft.fftfreq(g.nx)
        ty = 2 * np.pi * np.fft.fftfreq(g.ny)

        def d2(t, h):
            return (2 * np.cos(t) - 2) / h**2

        def d1(t, h):
            e = np.exp(1j * t)
            if self.nu >= 0:
                return (-e**2 + 6 * e - 3 - 2 / e) / (6 * h)
            return (2 * e + 3 - 6 / e + e**-2) / (6 * h)

        sx = d2(tx, g.dx) + self.nu * d1(tx, g.dx)
        sy = d2(ty, g.dy) + self.nu * d1(ty, g.dy)
        return sx[:, None] + sy[None, :]


@dataclass(frozen=True)
class DiffusionAdvectionSource:
    """f(u) = A u + S with a time-independent source S."""

    linear_part: DiffusionAdvection
    source: np.ndarray = field(repr=False)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.linear_part(u) + self.source

    def affine_vector(self, u: np.ndarray) -> np.ndarray:
        """A u + S; the vector multiplied by phi_1(A dt) dt in the exact update."""
        return self(u)


@dataclass(frozen=True)
class Burgers:
    """f(u) = lap(u) + (nu/2) ((u^2)_x + (u^2)_y)."""

    grid: Grid2D
    nu: float = 10.0

    def __call__(self, u: np.ndarray) -> np.ndarray:
        g = self.grid
        if u.shape != (g.size,):
            raise vecops.DimensionError(f"expected length {g.size}, got {u.shape}")
        u2 = u.reshape(g.nx, g.ny)
        out = ndimage.correlate(u2, self._kernels[0], mode="wrap")
        if self.nu != 0.0:
            out += ndimage.correlate(u2 * u2, self._kernels[1], mode="wrap")
        return out.reshape(-1)

    @cached_property
    def _kernels(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        diffusion = stencil_kernel(_diffusion_weights(g.dx), _diffusion_weights(g.dy))
        flux = stencil_kernel(*(_combine(_upwind_weights(h, self.nu), scales=[0.5 * self.nu])
                                for h in (g.dx, g.dy)))
        return diffusion, flux


def source_term(grid: Grid2D) -> np.ndarray:
    x, y = grid.mesh()
    s = (np.exp(-((x + 0.4) ** 2 + (y - 0.6) ** 2) / 0.05)
         + np.exp(-((x - 0.25) ** 2 + (y + 0.1) ** 2) / 0.04))
    return s.reshape(-1)


def initial_condition(spec: ProblemSpec) -> np.ndarray:
    x, y = spec.grid.mesh()
    if spec.kind is Kind.BURGERS:
        u = 2.0 + 1e-2 * (np.sin(2 * np.pi * x) + np.sin(2 * np.pi * y)
                          + np.sin(8 * np.pi * x + 0.3) + np.sin(8 * np.pi * y + 0.3))
    else:
        u = 1.0 + np.exp(-((x + 0.5) ** 2 + (y + 0.5) ** 2) / 0.01)
    return u.reshape(-1)


def rhs_diff_adv(spec: ProblemSpec) -> DiffusionAdvection:
    return DiffusionAdvection(spec.grid, spec.nu)


def rhs_diff_adv_source(spec: ProblemSpec) -> DiffusionAdvectionSource:
    return DiffusionAdvectionSource(DiffusionAdvection(spec.grid, spec.nu), source_term(spec.grid))


def rhs_burgers(spec: ProblemSpec) -> Burgers:
    return Burgers(spec.grid, spec.nu)


def make_rhs(spec: ProblemSpec):
    return {
        Kind.DIFF_ADV: rhs_diff_adv,
        Kind.DIFF_ADV_SOURCE: rhs_diff_adv_source,
        Kind.BURGERS: rhs_burgers,
    }[spec.kind](spec)


def cfl_dt(spec: ProblemSpec) -> float:
    """min(h/|nu|, h^2/4) with h = min(dx, dy); the diffusive bound alone if nu == 0."""
    h = min(spec.grid.dx, spec.grid.dy)
    diffusive = h * h / 4.0
    if spec.nu == 0:
        return diffusive
    return min(h / abs(spec.nu), diffusive)
