"""Tabulate single-jump patterns over the switching level b at fixed D.

Columns: b, jump position, v range, steady residual and the stability constant c1.
"""
import argparse
import csv
import sys

import numpy as np

from rdpattern.kinetics import ReducedParams, v_r
from rdpattern.shooting import Shooter, ShootingError, construct_monotone, steady_residual
from rdpattern.stability import check_thm22, reduced_field


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m1", type=float, default=1.2)
    ap.add_argument("--m2", type=float, default=2.0)
    ap.add_argument("--k", type=float, default=0.01)
    ap.add_argument("--mu3", type=float, default=4.1)
    ap.add_argument("--D", type=float, default=1.0)
    ap.add_argument("--count", type=int, default=12)
    ap.add_argument("--n", type=int, default=1024)
    args = ap.parse_args()

    p = ReducedParams(args.m1, args.m2, args.k, args.mu3, args.D)
    sh = Shooter(p)
    x = np.linspace(0.0, 1.0, args.n + 1)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["b", "jump", "v_min", "v_max", "u_max", "residual", "c1", "thm22"])
    for b in np.linspace(0.2, v_r(p), args.count + 2)[1:-1]:
        try:
            pat = construct_monotone(p, args.D, float(b), sh)
        except ShootingError as exc:
            print(f"# b={b:.4g}: {exc}", file=sys.stderr)
            continue
        rep = check_thm22(reduced_field(pat))
        v = pat.v(x)
        w.writerow([f"{b:.6g}", f"{pat.jumps[0]:.6g}", f"{v.min():.6g}", f"{v.max():.6g}", f"{pat.u(x).max():.6g}",
                    f"{steady_residual(pat, args.n)[0]:.3e}", f"{rep.constants['c1']:.6g}", rep.all_hold])


if __name__ == "__main__":
    main()
