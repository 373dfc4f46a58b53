"""Run harness: fixed-step runs with per-step metrics, convergence studies, CLI.

Linear problems can take the exponential-only path (integrator ``exp``): the
homogeneous problem advances by ``exp(A dt) u`` and the sourced one by
``u + dt phi_1(A dt)(A u + S)``. Any registry integrator steps any problem.

CSV layout (schema ``lejaexp-run/1``)::

    # lejaexp-run/1 problem=... integrator=... (config)
    step,time,dt,iters,error
    1,...                      one row per step
    summary,t_final,dt,total_iters,max_error
    # total_steps=... (metrics)
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from lejaexp import integrators, problems, vecops
from lejaexp.integrators import RegistryError, SolverContext
from lejaexp.jacobian import EvaluationError, power_iterations, spectrum_to_leja
from lejaexp.leja import (InterpolationConfig, LejaConvergenceError, LejaDivergenceError,
                          leja_nodes, real_leja_exp, real_leja_phi_nl)
from lejaexp.problems import Kind

SCHEMA = "lejaexp-run/1"
EXP_PATH = "exp"
FORMATS = ("csv", "json")
LINEAR_KINDS = (Kind.DIFF_ADV, Kind.DIFF_ADV_SOURCE)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ValueError):
    """Invalid run configuration; raised before any compute."""


class SolverError(RuntimeError):
    """A step failed; carries the 1-based index of the failing step."""

    def __init__(self, step: int, cause: BaseException):
        super().__init__(f"step {step} failed: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


_SOLVER_FAILURES = (LejaConvergenceError, LejaDivergenceError, EvaluationError,
                    FloatingPointError, OverflowError)


def _problem_kind(name: str) -> Kind:
    try:
        return Kind(name.replace("_", "-").lower())
    except ValueError:
        choices = ", ".join(k.value for k in Kind)
        raise ConfigError(f"unknown problem {name!r}; choose from {choices}") from None


def resolve_integrator(name: str, kind: Kind, allow_disabled: bool = False) -> str:
    """Canonical integrator name for a problem, or ConfigError."""
    if name.lower() == EXP_PATH:
        if kind not in LINEAR_KINDS:
            raise ConfigError(f"integrator {EXP_PATH!r} only applies to linear problems")
        return EXP_PATH
    try:
        integrators.canonical_name(name)
    except RegistryError as exc:
        raise ConfigError(f"{exc}, or {EXP_PATH!r} for the exponential-only path "
                          "on linear problems") from None
    try:
        return integrators.get_descriptor(name, allow_disabled).name
    except RegistryError as exc:
        raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class RunConfig:
    problem: str = "diff-adv"
    integrator: str = EXP_PATH
    n: int = 128
    dt_cfl_multiple: float = 1.0
    t_final: float = 1e-3
    rtol: float = 1e-12
    atol: float = 0.0
    spectrum_refresh_every: int = 50
    output_path: str | None = None
    output_format: str = "csv"
    nu: float = 10.0
    allow_disabled: bool = False

    def __post_init__(self):
        kind = _problem_kind(self.problem)
        object.__setattr__(self, "problem", kind.value)
        object.__setattr__(self, "integrator",
                           resolve_integrator(self.integrator, kind, self.allow_disabled))
        if int(self.n) != self.n or self.n < 8:
            raise ConfigError("n must be an integer >= 8")
        for name in ("dt_cfl_multiple", "t_final"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive and finite")
        if not (self.rtol >= 0 and self.atol >= 0 and self.rtol + self.atol > 0):
            raise ConfigError("rtol and atol must be nonnegative and not both zero")
        if self.spectrum_refresh_every < 1:
            raise ConfigError("spectrum_refresh_every must be >= 1")
        if self.output_format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
        if not math.isfinite(self.nu):
            raise ConfigError("nu must be finite")

    @property
    def kind(self) -> Kind:
        return Kind(self.problem)

    @property
    def spec(self) -> problems.ProblemSpec:
        return problems.make_spec(self.problem, int(self.n), self.nu)

    @property
    def dt(self) -> float:
        return self.dt_cfl_multiple * problems.cfl_dt(self.spec)


@dataclass(frozen=True)
class StepRow:
    step: int
    time: float
    dt: float
    iters: int
    error: float


@dataclass(frozen=True)
class RunMetrics:
    total_steps: int
    total_leja_iters: int
    wall_time_seconds: float
    effective_bandwidth: float  # GB/s
    final_state_checksum: str
    vector_reads_writes: int
    max_error: float


@dataclass
class RunResult:
    config: RunConfig
    metrics: RunMetrics
    rows: list[StepRow]
    state: np.ndarray = field(repr=False)


def step_sizes(t_final: float, dt: float) -> list[float]:
    """Nominal steps of ``dt`` with the last one truncated to land on ``t_final``.

    A quotient within 1e-9 of an integer counts as that integer, so round-off
    never produces a sliver step.
    """
    q = t_final / dt
    count = round(q) if abs(q - round(q)) <= 1e-9 * max(q, 1.0) else math.ceil(q)
    count = max(count, 1)
    last = t_final - (count - 1) * dt
    return [dt] * (count - 1) + [last]


class Engine:
    """Advances one problem with one integrator; owns every work vector."""

    def __init__(self, spec: problems.ProblemSpec, integrator: str, rtol: float = 1e-12,
                 atol: float = 0.0, refresh_every: int = 50, allow_disabled: bool = False):
        self.spec = spec
        self.rhs = problems.make_rhs(spec)
        self.integrator = resolve_integrator(integrator, spec.kind, allow_disabled)
        self.rtol, self.atol = rtol, atol
        self.refresh_every = refresh_every
        self.linear = spec.kind in LINEAR_KINDS
        self.nodes = leja_nodes()
        n = spec.grid.size
        self.state = vecops.empty(n, tag="state")
        self.next = vecops.empty(n, tag="state")
        np.copyto(self.state, problems.initial_condition(spec))
        if self.integrator == EXP_PATH:
            self.context = None
            self.scratch = [vecops.empty(n, tag="scratch") for _ in range(integrators.NUM_SCRATCH)]
            self.low = None
        else:
            self.context = SolverContext(n, self.integrator, self.nodes, allow_disabled)
            self.scratch = self.context.scratch
            self.low = vecops.empty(n, tag="output")
        self.leja_spec = None
        self.steps_taken = 0

    def _refresh_spectrum(self):
        due = self.leja_spec is None or (
            not self.linear and self.steps_taken % self.refresh_every == 0)
        if due:
            mag = power_iterations(self.rhs, self.state, scratch=self.scratch)
            self.leja_spec = spectrum_to_leja(mag)

    def _exp_step(self, h: float) -> int:
        s = self.leja_spec
        cfg = InterpolationConfig(s.c, s.gamma, h, self.rtol, self.atol)
        y = self.scratch[0]
        if self.spec.kind is Kind.DIFF_ADV:
            _, iters = real_leja_exp(self.rhs, self.state, cfg, self.nodes,
                                     out=self.next, scratch=[y])
            return iters
        v = self.scratch[1]
        vecops.record(reads=1, writes=1)
        np.copyto(v, self.rhs.affine_vector(self.state))
        q, iters = real_leja_phi_nl(self.rhs.linear_part, v, 1, cfg, self.nodes,
                                    out=self.next, scratch=[y])
        vecops.axpby(1.0, self.state, h, q, out=self.next)
        return iters

    def advance(self, h: float) -> tuple[int, float]:
        """One step of size ``h``; returns (iters, embedded error)."""
        index = self.steps_taken + 1
        try:
            self._refresh_spectrum()
            if self.context is None:
                iters, error = self._exp_step(h), 0.0
            else:
                res = self.context.step(self.rhs, self.state, h, self.leja_spec, self.rtol,
                                        self.atol, u_high=self.next, u_low=self.low)
                iters, error = res.iters, res.error
            if not np.isfinite(self.next).all():
                raise vecops.NonFiniteError("state is not finite")
        except _SOLVER_FAILURES as exc:
            raise SolverError(index, exc) from exc
        self.state, self.next = self.next, self.state
        self.steps_taken = index
        return iters, error

    def integrate(self, t_final: float, dt: float) -> list[StepRow]:
        sizes = step_sizes(t_final, dt)
        rows = []
        for k, h in enumerate(sizes):
            iters, error = self.advance(h)
            t = t_final if k == len(sizes) - 1 else (k + 1) * dt
            rows.append(StepRow(self.steps_taken, t, h, iters, error))
        return rows


def run(config: RunConfig) -> RunResult:
    """Execute one configuration; writes output when ``config.output_path`` is set."""
    engine = Engine(config.spec, config.integrator, config.rtol, config.atol,
                    config.spectrum_refresh_every, config.allow_disabled)
    with vecops.count_traffic() as tally:
        start = time.perf_counter()
        rows = engine.integrate(config.t_final, config.dt)
        wall = time.perf_counter() - start
    n = engine.state.size
    metrics = RunMetrics(
        total_steps=len(rows),
        total_leja_iters=sum(r.iters for r in rows),
        wall_time_seconds=wall,
        effective_bandwidth=n * 8 * tally.total * 1e-9 / wall if wall > 0 else 0.0,
        final_state_checksum=vecops.checksum(engine.state),
        vector_reads_writes=tally.total,
        max_error=max((r.error for r in rows), default=0.0),
    )
    result = RunResult(config, metrics, rows, engine.state.copy())
    if config.output_path is not None:
        write_result(result, config.output_path, config.output_format)
    return result


# --- output -------------------------------------------------------------------

def _config_comment(config: RunConfig) -> str:
    fields = {k: v for k, v in asdict(config).items() if k not in ("output_path", "output_format")}
    return f"# {SCHEMA} " + " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                                     for k, v in fields.items())


def write_csv(result: RunResult, path) -> None:
    m = result.metrics
    with open(path, "w", newline="") as fh:
        fh.write(_config_comment(result.config) + "\n")
        w = csv.writer(fh)
        w.writerow(["step", "time", "dt", "iters", "error"])
        for r in result.rows:
            w.writerow([r.step, repr(r.time), repr(r.dt), r.iters, repr(r.error)])
        w.writerow(["summary", repr(result.config.t_final), repr(result.config.dt),
                    m.total_leja_iters, repr(m.max_error)])
        fh.write("# " + " ".join(f"{k}={v}" for k, v in asdict(m).items()) + "\n")


def read_csv(path) -> list[list[str]]:
    """Data rows (header excluded, comments skipped) of a run CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    return rows[1:]


def write_json(result: RunResult, path) -> None:
    doc = {
        "schema": SCHEMA,
        "config": asdict(result.config),
        "metrics": asdict(result.metrics),
        "steps": [asdict(r) for r in result.rows],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_result(result: RunResult, path, fmt: str = "csv") -> None:
    (write_csv if fmt == "csv" else write_json)(result, path)


# --- convergence study ----------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    dt: float
    error: float
    order: float | None  # log2 ratio against the previous (coarser) row


def highest_order_integrator() -> str:
    """Enabled integrator of highest nominal order, first registered on ties."""
    enabled = [d for d in integrators.REGISTRY.values() if d.enabled]
    return max(enabled, key=lambda d: d.order_high).name


def final_state(problem: str, integrator: str, n: int, dt: float, t_final: float,
                rtol: float = 1e-13, atol: float = 0.0, refresh_every: int = 50,
                nu: float = 10.0, allow_disabled: bool = False) -> np.ndarray:
    engine = Engine(problems.make_spec(_problem_kind(problem).value, n, nu), integrator,
                    rtol, atol, refresh_every, allow_disabled)
    engine.integrate(t_final, dt)
    return engine.state.copy()


def convergence_study(problem: str, integrator: str, n: int, dt_list: Sequence[float],
                      t_final: float, rtol: float = 1e-13, refresh_every: int = 50,
                      nu: float = 10.0, reference: str | None = None,
                      allow_disabled: bool = False,
                      reference_state: np.ndarray | None = None) -> list[ConvergenceRow]:
    """Errors against a reference run at min(dt_list)/8 and successive orders.

    ``dt_list`` should hold dt values that evenly divide ``t_final``. A
    precomputed ``reference_state`` skips the reference run.
    """
    dts = sorted(dt_list, reverse=True)
    ref = reference_state
    if ref is None:
        ref_name = reference or highest_order_integrator()
        ref = final_state(problem, ref_name, n, dts[-1] / 8, t_final, rtol,
                          refresh_every=refresh_every, nu=nu, allow_disabled=True)
    rows: list[ConvergenceRow] = []
    for dt in dts:
        u = final_state(problem, integrator, n, dt, t_final, rtol,
                        refresh_every=refresh_every, nu=nu, allow_disabled=allow_disabled)
        err = vecops.l2norm_scaled(u - ref)
        order = None
        if rows and err > 0 and rows[-1].error > 0:
            order = math.log(rows[-1].error / err) / math.log(rows[-1].dt / dt)
        rows.append(ConvergenceRow(dt, err, order))
    return rows


# --- command line ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lejaexp", description="Run an exponential integrator "
                                "on a 2D benchmark problem and report per-step metrics.")
    p.add_argument("--problem", default="diff-adv", choices=[k.value for k in Kind])
    p.add_argument("--integrator", default=EXP_PATH,
                   help=f"registry name or {EXP_PATH!r} (linear problems); "
                        f"choices: {EXP_PATH}, {', '.join(integrators.REGISTRY)}")
    p.add_argument("--n", type=int, default=128, help="grid points per side")
    p.add_argument("--dt-cfl", type=float, default=1.0, help="step size in units of dt_CFL")
    p.add_argument("--t-final", type=float, default=1e-3)
    p.add_argument("--rtol", type=float, default=1e-12)
    p.add_argument("--atol", type=float, default=0.0)
    p.add_argument("--refresh-spectrum", type=int, default=50,
                   help="steps between spectrum estimates (nonlinear problems)")
    p.add_argument("--nu", type=float, default=10.0)
    p.add_argument("--out", default=None, help="output path (default: derived from config)")
    p.add_argument("--format", default="csv", choices=FORMATS)
    p.add_argument("--allow-disabled", action="store_true",
                   help="permit integrators that have not passed their order test")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(
            problem=args.problem, integrator=args.integrator, n=args.n,
            dt_cfl_multiple=args.dt_cfl, t_final=args.t_final, rtol=args.rtol,
            atol=args.atol, spectrum_refresh_every=args.refresh_spectrum,
            output_format=args.format, nu=args.nu, allow_disabled=args.allow_disabled,
            output_path=args.out or f"{args.problem}_{args.integrator}_n{args.n}.{args.format}",
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run(config)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    m = result.metrics
    print(f"steps={m.total_steps} iters={m.total_leja_iters} wall={m.wall_time_seconds:.3f}s "
          f"bandwidth={m.effective_bandwidth:.3f}GB/s checksum={m.final_state_checksum} "
          f"-> {config.output_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
