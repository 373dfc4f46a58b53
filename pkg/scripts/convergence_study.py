"""Observed convergence orders of the registered integrators on Burgers.

    python3 scripts/convergence_study.py --n 64 --t-final 0.05 --divisions 8 16 32
"""
import argparse
import warnings

from lejaexp import cli
from lejaexp.integrators import REGISTRY
from lejaexp.jacobian import EstimationWarning


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--problem", default="burgers")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--t-final", type=float, default=0.05)
    p.add_argument("--divisions", type=int, nargs="+", default=[8, 16, 32],
                   help="step counts; dt = t_final / division")
    p.add_argument("--rtol", type=float, default=1e-13)
    p.add_argument("--integrators", nargs="*", default=list(REGISTRY))
    args = p.parse_args()
    warnings.simplefilter("ignore", EstimationWarning)

    dts = [args.t_final / d for d in args.divisions]
    ref_name = cli.highest_order_integrator()
    ref = cli.final_state(args.problem, ref_name, args.n, min(dts) / 8, args.t_final, args.rtol)
    print(f"reference: {ref_name} at dt = {min(dts) / 8:.3e}")
    print(f"{'integrator':<18}{'nominal':>8}  " + "  ".join(f"{'dt=' + format(d, '.2e'):>14}"
                                                       for d in sorted(dts, reverse=True)))
    for name in args.integrators:
        desc = REGISTRY[name]
        rows = cli.convergence_study(args.problem, name, args.n, dts, args.t_final, args.rtol,
                                     reference_state=ref, allow_disabled=True)
        cells = [f"{r.error:.2e}" + (f" ({r.order:.2f})" if r.order else "") for r in rows]
        flag = "" if desc.enabled else "  [disabled]"
        print(f"{name:<18}{desc.order_high:>8}  " + "  ".join(f"{c:>14}" for c in cells) + flag)


if __name__ == "__main__":
    main()
