"""Exponential Rosenbrock / EPIRK time steppers on top of the Leja kernels.

Every stepper draws its intermediate vectors from a :class:`SolverContext`:
``num_aux_vectors`` integrator buffers plus the four Leja/Jacobian scratch
vectors, all allocated once when the context is built. Output buffers
(``u_low``, ``u_high``) belong to the caller and double as stage storage
wherever their final value is not yet needed.

Stage notation: ``p_a = phi_1(a J dt) f(u) dt``; ``R(k) = (F(k) - F(u)) dt``
with the nonlinear remainder ``F(k) = f(k) - J(u) k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from lejaexp import vecops
from lejaexp.jacobian import SpectrumEstimate, remainder_difference
from lejaexp.leja import InterpolationConfig, LejaNodes, leja_nodes, real_leja_phi

NUM_SCRATCH = 4


class RegistryError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


@dataclass
class StepResult:
    u_high: np.ndarray
    u_low: np.ndarray | None = None
    error: float = 0.0
    iters: int = 0


@dataclass(frozen=True)
class IntegratorDescriptor:
    name: str
    order_high: int
    order_low: int | None
    num_aux_vectors: int
    stepper: Callable = field(repr=False, compare=False)
    enabled: bool = True

    @property
    def embedded(self) -> bool:
        return self.order_low is not None


class _Stage:
    """Per-step helper binding rhs, u, dt and the context buffers."""

    def __init__(self, ctx: "SolverContext", rhs, u, dt, spec, rtol, atol):
        self.rhs, self.u, self.dt = rhs, u, dt
        self.cfg = InterpolationConfig(spec.c, spec.gamma, dt, rtol, atol)
        self.nodes = ctx.nodes
        self.scratch = ctx.scratch
        self.f_u = self.scratch[1]
        vecops.record(reads=1, writes=1)
        np.copyto(self.f_u, rhs(u))
        self.iters = 0

    def flux(self, out):
        """out = f(u) dt."""
        return vecops.scale(self.dt, self.f_u, out=out)

    def phi(self, l, v, coeffs, outs):
        _, it = real_leja_phi(self.rhs, self.u, v, coeffs, l, self.cfg, self.nodes,
                              out=outs, scratch=self.scratch, f_u=self.f_u)
        self.iters += it

    def remainder(self, k, out):
        """out = (F(k) - F(u)) dt; ``out`` must not alias ``k``."""
        remainder_difference(self.rhs, self.u, k, f_u=self.f_u, out=out, work=self.scratch[2])
        return vecops.scale(self.dt, out, out=out)


# --- fully specified methods --------------------------------------------------

def _ros_eu(st: _Stage, aux, u_low, u_high):
    # aux0: f dt
    f_u = st.flux(aux[0])
    st.phi(1, f_u, [1.0], [u_high])
    vecops.axpby(1.0, st.u, 1.0, u_high, out=u_high)
    return None


def _exprb32(st: _Stage, aux, u_low, u_high):
    # aux0: f dt -> phi_3 term; u_high: R(a) -> solution
    u = st.u
    f_u = st.flux(aux[0])
    st.phi(1, f_u, [1.0], [u_low])
    vecops.axpby(1.0, u, 1.0, u_low, out=u_low)
    r_a = st.remainder(u_low, out=u_high)
    u_nl_3 = aux[0]
    st.phi(3, r_a, [1.0], [u_nl_3])
    vecops.axpby(1.0, u_low, 2.0, u_nl_3, out=u_high)


# --- extended catalogue ---------------------------------------------------------

def _weights(c2, c3):
    """phi_3 / phi_4 weights (x2, x3, y2, y3) of two remainders at nodes c2, c3.

    Solves sum x c^2 = 2, sum x c^3 = 0, sum y c^2 = 0, sum y c^3 = 6, i.e.
    b_i = x_i phi_3 + y_i phi_4 with sum b c^2 = 2 phi_3 and sum b c^3 = 6 phi_4.
    """
    c2, c3 = Fraction(c2), Fraction(c3)
    det = c2**2 * c3**3 - c3**2 * c2**3
    x2, x3 = 2 * c3**3 / det, -2 * c2**3 / det
    y2, y3 = -6 * c3**2 / det, 6 * c2**2 / det
    return tuple(float(v) for v in (x2, x3, y2, y3))


def _exprb42(st: _Stage, aux, u_low, u_high):
    # aux0: f dt -> R(a); aux1: p_3/4 -> a -> phi_3 R(a); u_high: p_1 -> solution
    u = st.u
    f_u = st.flux(aux[0])
    st.phi(1, f_u, [0.75, 1.0], [aux[1], u_high])
    a = vecops.axpby(1.0, u, 0.75, aux[1], out=aux[1])
    r_a = st.remainder(a, out=aux[0])
    st.phi(3, r_a, [1.0], [aux[1]])
    vecops.axpbypcz(1.0, u, 1.0, u_high, 32.0 / 9.0, aux[1], out=u_high)
    return None


def _exprb43(st: _Stage, aux, u_low, u_high):
    # aux0: f dt -> R(a) -> phi_4 combo; aux1: p_1/2 -> a -> phi_1 R(a) -> b
    #       -> phi_3 combo -> phi_4 term; u_low: R(b) -> phi_3 term -> 3rd order
    u = st.u
    f_u = st.flux(aux[0])
    st.phi(1, f_u, [0.5, 1.0], [aux[1], u_high])
    a = vecops.axpby(1.0, u, 0.5, aux[1], out=aux[1])
    r_a = st.remainder(a, out=aux[0])
    st.phi(1, r_a, [1.0], [aux[1]])
    b = vecops.axpbypcz(1.0, u, 1.0, u_high, 1.0, aux[1], out=aux[1])
    r_b = st.remainder(b, out=u_low)
    vecops.axpby(16.0, r_a, -2.0, r_b, out=aux[1])
    vecops.axpby(-48.0, r_a, 12.0, r_b, out=aux[0])
    st.phi(3, aux[1], [1.0], [u_low])
    st.phi(4, aux[0], [1.0], [aux[1]])
    vecops.axpbypcz(1.0, u, 1.0, u_high, 1.0, u_low, out=u_low)
    vecops.axpby(1.0, u_low, 1.0, aux[1], out=u_high)


def _two_remainder_finish(st, aux, u_low, u_high, r2, r3, c2, c3):
    """u_high = u + p_1 + phi_3(x.R) + phi_4(y.R); u_low drops the phi_4 part.

    Expects p_1 in ``u_high``, R(c2) in ``r2`` and R(c3) in ``u_low``; uses
    ``aux[0..2]`` as free storage.
    """
    x2, x3, y2, y3 = _weights(c2, c3)
    u = st.u
    free = [b for b in aux[:3] if b is not r2]
    vecops.axpby(x2, r2, x3, u_low, out=free[0])
    vecops.axpby(y2, r2, y3, u_low, out=r2)
    st.phi(3, free[0], [1.0], [free[1]])
    st.phi(4, r2, [1.0], [free[0]])
    vecops.axpbypcz(1.0, u, 1.0, u_high, 1.0, free[1], out=u_low)
    vecops.axpby(1.0, u_low, 1.0, free[0], out=u_high)


def _three_stage(c2, c3):
    """Stages u + c phi_1(c J dt) f dt at c2 < c3, then the phi_3/phi_4 combination."""
    lo, hi = sorted((c2, c3))

    def stepper(st: _Stage, aux, u_low, u_high):
        # aux0: f dt -> R(c2); aux1, aux2: stages -> free; u_low: R(c3)
        u = st.u
        f_u = st.flux(aux[0])
        st.phi(1, f_u, [lo, hi, 1.0], [aux[1], aux[2], u_high])
        s2, s3 = (aux[1], aux[2]) if c2 < c3 else (aux[2], aux[1])
        vecops.axpby(1.0, u, c2, s2, out=s2)
        vecops.axpby(1.0, u, c3, s3, out=s3)
        st.remainder(s2, out=aux[0])
        st.remainder(s3, out=u_low)
        return _two_remainder_finish(st, aux, u_low, u_high, aux[0], None, c2, c3)

    return stepper


def _exprb53s3(st: _Stage, aux, u_low, u_high):
    # aux0: f dt -> R(U2); aux1: p_1/2 -> U2 -> phi_3(.9 J dt) R(U2);
    # aux2: p_9/10 -> U3; u_low: phi_3(.5 J dt) R(U2) -> R(U3)
    # U3 is not third order on its own: the phi_3(.5 J dt) term cancels the
    # defect of U2 in the final combination.
    u = st.u
    f_u = st.flux(aux[0])
    st.phi(1, f_u, [0.5, 0.9, 1.0], [aux[1], aux[2], u_high])
    u2 = vecops.axpby(1.0, u, 0.5, aux[1], out=aux[1])
    r2 = st.remainder(u2, out=aux[0])
    st.phi(3, r2, [0.5, 0.9], [u_low, aux[1]])
    vecops.axpby(0.9, aux[2], 27.0 / 25.0, u_low, out=aux[2])
    u3 = vecops.axpbypcz(1.0, u, 1.0, aux[2], 729.0 / 125.0, aux[1], out=aux[2])
    st.remainder(u3, out=u_low)
    return _two_remainder_finish(st, aux, u_low, u_high, r2, None, 0.5, 0.9)


def _exprb54s4(st: _Stage, aux, u_low, u_high):
    # Fifth order from R(U3), R(U4) at c = 1/2, 9/10; fourth order companion
    # from R(U2), R(U3) at c = 1/4, 1/2.
    u = st.u
    f_u = st.flux(aux[0])
    st.phi(1, f_u, [0.25, 0.5, 0.9, 1.0], [aux[1], aux[2], aux[3], u_high])
    u2 = vecops.axpby(1.0, u, 0.25, aux[1], out=aux[1])
    r2 = st.remainder(u2, out=aux[0])
    st.phi(3, r2, [0.5], [aux[1]])
    u3 = vecops.axpbypcz(1.0, u, 0.5, aux[2], 4.0, aux[1], out=aux[2])
    r3 = st.remainder(u3, out=aux[1])
    st.phi(3, r3, [0.9], [u_low])
    u4 = vecops.axpbypcz(1.0, u, 0.9, aux[3], 729.0 / 125.0, u_low, out=aux[3])
    r4 = st.remainder(u4, out=u_low)
    x3, x4, y3, y4 = _weights(0.5, 0.9)
    w2, w3, z2, z3 = _weights(0.25, 0.5)
    # Difference (5th - 4th) in aux2 (phi_3 part) and aux3 (phi_4 part).
    vecops.axpbypcz(-w2, r2, x3 - w3, r3, x4, r4, out=aux[2])
    vecops.axpbypcz(-z2, r2, y3 - z3, r3, y4, r4, out=aux[3])
    # Fourth-order combinations in place: aux0 <- w.R, aux1 <- z.R.
    vecops.axpby(w2, r2, w3, r3, out=r2)
    vecops.axpby(z2 / w2, r2, z3 - z2 * w3 / w2, r3, out=r3)
    st.phi(3, aux[0], [1.0], [u_low])
    vecops.axpbypcz(1.0, u, 1.0, u_high, 1.0, u_low, out=u_low)
    st.phi(4, aux[1], [1.0], [aux[0]])
    vecops.axpby(1.0, u_low, 1.0, aux[0], out=u_low)
    st.phi(3, aux[2], [1.0], [aux[0]])
    st.phi(4, aux[3], [1.0], [aux[1]])
    err = vecops.axpby(1.0, aux[0], 1.0, aux[1], out=aux[0])
    vecops.axpby(1.0, u_low, 1.0, err, out=u_high)


_P1 = dict(
    a11=0.35129592695058193092, a21=0.84405472011657126298, a22=1.6905891609568963624,
    b1=1.0, b2=1.2727127317356892397, b3=2.2714599265422622275,
    g11=0.35129592695058193092, g21=0.84405472011657126298, g22=1.0,
    g31=1.0, g32=0.71111095364366870359, g33=0.62378111953371494809,
    g32_4=0.5, g33_4=1.0,
)


def _epirk5p1(st: _Stage, aux, u_low, u_high):
    # R1 terms use phi_1, the second difference R2 - 2 R1 uses phi_3.
    # aux0: f dt -> R1 -> phi_3(g33) term; aux1: U1 -> phi_1 R1 (g22) -> R2 - 2 R1
    # aux2: p_g21 -> U2 -> phi_3 (g33_4) term; aux3: phi_1 R1 (g32); u_low: phi_1 R1 (g32_4)
    k = _P1
    u = st.u
    f_u = st.flux(aux[0])
    st.phi(1, f_u, [k["g11"], k["g21"], k["g31"]], [aux[1], aux[2], u_high])
    u1 = vecops.axpby(1.0, u, k["a11"], aux[1], out=aux[1])
    r1 = st.remainder(u1, out=aux[0])
    st.phi(1, r1, [k["g32_4"], k["g32"], k["g22"]], [u_low, aux[3], aux[1]])
    u2 = vecops.axpbypcz(1.0, u, k["a21"], aux[2], k["a22"], aux[1], out=aux[2])
    st.remainder(u2, out=aux[1])
    d2 = vecops.axpby(1.0, aux[1], -2.0, r1, out=aux[1])
    st.phi(3, d2, [k["g33"], k["g33_4"]], [aux[0], aux[2]])
    b1, b2, b3 = k["b1"], k["b2"], k["b3"]
    vecops.axpbypcz(1.0, u, b1, u_high, b2, u_low, out=u_low)
    vecops.axpby(1.0, u_low, b3, aux[2], out=u_low)
    vecops.axpbypcz(1.0, u, b1, u_high, b2, aux[3], out=u_high)
    vecops.axpby(1.0, u_high, b3, aux[0], out=u_high)
    diff = vecops.axpby(1.0, u_high, -1.0, u_low, out=aux[1])


REGISTRY: dict[str, IntegratorDescriptor] = {}


def register(desc: IntegratorDescriptor) -> IntegratorDescriptor:
    REGISTRY[desc.name] = desc
    return desc


for _desc in (
    IntegratorDescriptor("Rosenbrock_Euler", 2, None, 1, _ros_eu),
    IntegratorDescriptor("EXPRB32", 3, 2, 1, _exprb32),
    IntegratorDescriptor("EXPRB42", 4, None, 2, _exprb42),
    IntegratorDescriptor("EXPRB43", 4, 3, 2, _exprb43),
    IntegratorDescriptor("EXPRB53s3", 5, 3, 3, _exprb53s3, enabled=False),
    IntegratorDescriptor("EXPRB54s4", 5, 4, 4, _exprb54s4, enabled=False),
    IntegratorDescriptor("EPIRK4s3", 4, 3, 3, _three_stage(1 / 8, 1 / 9)),
    IntegratorDescriptor("EPIRK4s3A", 4, 3, 3, _three_stage(1 / 2, 2 / 3)),
    IntegratorDescriptor("EPIRK4s3B", 4, 3, 3, _three_stage(1 / 2, 3 / 4)),
    IntegratorDescriptor("EPIRK5P1", 5, 4, 4, _epirk5p1, enabled=False),
):
    register(_desc)


def canonical_name(name: str) -> str:
    key = name.replace("-", "_").lower()
    for known in REGISTRY:
        if known.lower() == key:
            return known
    raise RegistryError(f"unknown integrator {name!r}; choose from {', '.join(REGISTRY)}")


def get_descriptor(name: str, allow_disabled: bool = False) -> IntegratorDescriptor:
    desc = REGISTRY[canonical_name(name)]
    if not desc.enabled and not allow_disabled:
        raise RegistryError(f"integrator {desc.name!r} is disabled (it has not passed its order test)")
    return desc


class SolverContext:
    """Buffers, nodes and descriptor for one integrator; not shareable across threads."""

    def __init__(self, n: int, integrator: str, nodes: LejaNodes | None = None,
                 allow_disabled: bool = False):
        self.n = n
        self.descriptor = get_descriptor(integrator, allow_disabled)
        self.nodes = nodes or leja_nodes()
        self.aux = [vecops.empty(n, tag="aux") for _ in range(self.descriptor.num_aux_vectors)]
        self.scratch = [vecops.empty(n, tag="scratch") for _ in range(NUM_SCRATCH)]

    def step(self, rhs, u, dt: float, spec: SpectrumEstimate, rtol: float = 1e-12,
             atol: float = 0.0, u_high=None, u_low=None) -> StepResult:
        u = vecops.as_state(u, "u")
        if u.size != self.n:
            raise vecops.DimensionError(f"context is sized for {self.n}, got {u.size}")
        if u_high is None:
            u_high = vecops.empty(self.n, tag="output")
        if u_low is None:
            u_low = vecops.empty(self.n, tag="output")
        st = _Stage(self, rhs, u, dt, spec, rtol, atol)
        self.descriptor.stepper(st, self.aux, u_low, u_high)
        if not self.descriptor.embedded:
            return StepResult(u_high=u_high, u_low=None, error=0.0, iters=st.iters)
        # measured from the outputs themselves, so the contract holds after round-off
        error_vector = vecops.axpby(1.0, u_high, -1.0, u_low, out=self.scratch[0])
        return StepResult(u_high=u_high, u_low=u_low, error=vecops.l2norm_scaled(error_vector),
                          iters=st.iters)


def step(name: str, rhs, u, dt: float, spec: SpectrumEstimate, rtol: float = 1e-12,
         atol: float = 0.0, nodes: LejaNodes | None = None,
         context: SolverContext | None = None) -> StepResult:
    """One step of the named integrator; builds a context if none is given."""
    if context is None:
        context = SolverContext(np.asarray(u).size, name, nodes)
    elif context.descriptor.name != canonical_name(name):
        raise RegistryError(f"context was built for {context.descriptor.name}, not {name}")
    return context.step(rhs, u, dt, spec, rtol, atol)


def ros_eu(rhs, u, dt, spec, rtol=1e-12, atol=0.0, nodes=None) -> StepResult:
    return step("Rosenbrock_Euler", rhs, u, dt, spec, rtol, atol, nodes)


def exprb32(rhs, u, dt, spec, rtol=1e-12, atol=0.0, nodes=None) -> StepResult:
    return step("EXPRB32", rhs, u, dt, spec, rtol, atol, nodes)
