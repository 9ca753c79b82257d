"""Empirical scaling identity of the arithmetic transition density, both orientations.

    python3 scripts/gamma_a_scaling.py --paths 1000000
"""

import argparse

from asianop.green import check_gamma_A_scaling


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=1_000_000)
    ap.add_argument("--horizon", type=float, default=0.5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    rep = check_gamma_A_scaling((1.5, 0.5), args.horizon, n_paths=args.paths,
                                threads=args.threads)
    print(f"{'X1':>4} {'orientation':>12} {'discrepancy':>12} {'noise floor':>12} passed")
    for t in rep.trials:
        print(f"{t.X1:4.1f} {t.orientation:>12} {t.discrepancy:12.4e} {t.noise_floor:12.4e} "
              f"{t.passed}")
    print("resolved orientation:", rep.resolved_orientation)


if __name__ == "__main__":
    main()
