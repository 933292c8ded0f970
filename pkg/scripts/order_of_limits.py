"""Order-of-limits table for the XY chain at fixed field.

Prints phi_k0 (the equatorial mode phase) over M and gamma, then the two
iterated limits: gamma -> 0 at fixed M lands on 0 or 2 pi, while growing M
first keeps phi_k0 near pi.

    python scripts/order_of_limits.py --lam 0.3
"""

import argparse
import math

from berryqpt.detector import xy_order_of_limits


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--lam", type=float, default=0.3)
    ap.add_argument("--modes", type=int, nargs="+", default=[101, 1001, 5000, 20001, 65536])
    ap.add_argument("--gammas", type=float, nargs="+", default=[0.1, 0.05, 1e-2, 1e-4, 1e-6, 1e-8])
    ap.add_argument("--exponent", type=float, default=1.0, help="intensive phase divides by M**exponent")
    args = ap.parse_args()

    series = xy_order_of_limits(args.lam, args.gammas, args.modes, args.exponent)
    if not series.has_equatorial:
        print(f"lambda = {args.lam} has no equatorial mode; intensive phases only")
    header = "M".rjust(7) + "".join(f"{g:>14.1e}" for g in args.gammas)
    print("phi_k0 - pi" if series.has_equatorial else "phi(M)/M^a")
    print(header)
    for M in args.modes:
        cells = []
        for g in args.gammas:
            row = series.row(M, g)
            v = row["phase_k0"] - math.pi if series.has_equatorial else row["phase_intensive"]
            cells.append(f"{v:>14.6f}")
        print(f"{M:>7d}" + "".join(cells))
    if series.has_equatorial:
        print(f"gamma -> 0 at M = {max(args.modes)}: phi_k0 = {series.gamma_first_limit():.9f}")
        limit = series.size_first_limit()
        print("M -> inf first:", "not settled" if limit is None else f"phi_k0 = {limit:.6f} (pi = {math.pi:.6f})")
    if series.dithers:
        print(f"{len(series.dithers)} point(s) dithered off exact degeneracies")


if __name__ == "__main__":
    main()
