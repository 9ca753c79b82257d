"""Jump of d_s u across the exercise boundary as the mesh is halved.

    python3 scripts/smooth_pasting.py --levels 3
"""

import argparse
import warnings

from asianop.diagnostics import extract_exercise_boundary, smooth_pasting_check
from asianop.domains import DomainSpec
from asianop.model import ModelParams, PayoffSpec, calibrate_supersolution, sample_grid
from asianop.solver import solve_rectangle


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()
    warnings.simplefilter("ignore")
    m, spec = ModelParams(0.4, 0.05, 1.0), PayoffSpec("fixed", 1.0)
    box = ((0.25, 4.0), (0.01, 3.01))
    p = calibrate_supersolution(m, spec, sample_grid(*box, m.T))
    dom = DomainSpec.rectangle(*box[0], *box[1], m.T)
    print(f"{'mesh':>14} {'max jump':>10} {'points':>7} {'exercise-side error':>20}  worst (t, s, a)")
    for k in range(1, args.levels + 1):
        f = 2 ** k
        field, _ = solve_rectangle(m, spec, p, dom, 32 * f, 24 * f, 32 * f)
        rep = smooth_pasting_check(field, extract_exercise_boundary(field), phi_ds=spec.ds,
                                   t_window=(0.5, 0.9), a_window=(0.6, 1.5))
        worst = tuple(round(v, 3) for v in rep.worst) if rep.worst else None
        print(f"{32 * f:5d}x{24 * f}x{32 * f:<4d} {rep.max_mismatch:10.4f} {rep.n_points:7d} "
              f"{rep.exercise_side_error:20.2e}  {worst}")


if __name__ == "__main__":
    main()
