"""Desk-scale bandwidth table: wall time and effective GB/s per configuration.

    python3 scripts/benchmark.py --problem burgers --n 64 128 --dt-cfl 10 100
"""
import argparse
import itertools

from lejaexp import cli


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--problem", default="burgers")
    p.add_argument("--integrators", nargs="+",
                   default=["Rosenbrock_Euler", "EXPRB32", "EPIRK4s3A"])
    p.add_argument("--n", type=int, nargs="+", default=[64, 128])
    p.add_argument("--dt-cfl", type=float, nargs="+", default=[10.0, 100.0])
    p.add_argument("--steps", type=int, default=20, help="steps per configuration")
    p.add_argument("--rtol", type=float, default=1e-12)
    args = p.parse_args()

    print(f"{'integrator':<18}{'n':>6}{'dt/CFL':>8}{'steps':>7}{'iters':>8}"
          f"{'wall [s]':>10}{'GB/s':>8}")
    for name, n, mult in itertools.product(args.integrators, args.n, args.dt_cfl):
        probe = cli.RunConfig(problem=args.problem, integrator=name, n=n, dt_cfl_multiple=mult)
        cfg = cli.RunConfig(problem=args.problem, integrator=name, n=n, dt_cfl_multiple=mult,
                            t_final=args.steps * probe.dt, rtol=args.rtol)
        try:
            m = cli.run(cfg).metrics
        except cli.SolverError as exc:
            print(f"{name:<18}{n:>6}{mult:>8g}  failed: {exc}")
            continue
        print(f"{name:<18}{n:>6}{mult:>8g}{m.total_steps:>7}{m.total_leja_iters:>8}"
              f"{m.wall_time_seconds:>10.3f}{m.effective_bandwidth:>8.2f}")


if __name__ == "__main__":
    main()
