"""PDE value against out-of-sample LSMC and the European price at a few probes.

    python3 scripts/pde_vs_lsmc.py --paths 200000 --steps 256
"""

import argparse
import warnings

from asianop.domains import DomainSpec
from asianop.mc import european_price_mc, lsmc_price, schedule_sensitivity
from asianop.model import (ModelParams, PayoffSpec, SpaceTimePoint, calibrate_supersolution,
                           sample_grid)
from asianop.solver import SchemeOptions, solve_rectangle


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--steps", type=int, default=256)
    ap.add_argument("--transport", default="limited", choices=["upwind", "limited"])
    ap.add_argument("--theta", type=float, default=0.5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    warnings.simplefilter("ignore")
    m, spec = ModelParams(0.4, 0.05, 1.0), PayoffSpec("fixed", 1.0)
    box = ((0.25, 4.0), (0.01, 3.01))
    p = calibrate_supersolution(m, spec, sample_grid(*box, m.T))
    field, _ = solve_rectangle(m, spec, p, DomainSpec.rectangle(*box[0], *box[1], m.T),
                               128, 96, 128, SchemeOptions(theta=args.theta,
                                                           transport=args.transport))
    print(f"{'s':>5} {'PDE':>9} {'LSMC':>9} {'se':>8} {'in-sample':>9} {'European':>9}")
    for s in (0.9, 1.0, 1.2):
        z = SpaceTimePoint(0.5, s, 0.5)
        am = lsmc_price(m, spec, z, args.steps, args.paths, seed=2024, threads=args.threads)
        eu = european_price_mc(m, spec, z, args.steps, args.paths, seed=2024,
                               threads=args.threads)
        print(f"{s:5.2f} {float(field.value_at(z.t, s, z.a)):9.5f} {am.price:9.5f} "
              f"{am.stderr:8.1e} {am.in_sample:9.5f} {eu.price:9.5f}")
    z = SpaceTimePoint(0.5, 1.0, 0.5)
    print("exercise-schedule sensitivity at s = 1.0:")
    for M, est in schedule_sensitivity(m, spec, z, (32, 64, 128, 256), args.paths // 4,
                                       threads=args.threads).items():
        print(f"  M={M:4d}  {est.price:.5f} +- {est.stderr:.1e}")


if __name__ == "__main__":
    main()
