"""How tight is the gap bound on Berry curvature for random families?

Draws random d x d two-parameter families and reports the distribution of
|F| / bound, together with the largest ratio seen.

    python scripts/curvature_bound_survey.py --samples 5000 --dim 4
"""

import argparse

import numpy as np

from berryqpt.families import random_family
from berryqpt.numerics import curvature_sum_over_states, gap_at


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--min-gap", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    ratios = []
    while len(ratios) < args.samples:
        fam = random_family(rng, dim=args.dim, n_params=2)
        p = rng.normal(size=2)
        band = int(rng.integers(0, args.dim))
        if gap_at(fam, p, band) <= args.min_gap:
            continue
        s = curvature_sum_over_states(fam, p, 0, 1, band)
        ratios.append(abs(s.F_value) / s.bound if s.bound > 0 else 0.0)
    r = np.asarray(ratios)
    print(f"{len(r)} samples, d = {args.dim}")
    for q in (0.5, 0.9, 0.99):
        print(f"  quantile {q:4.2f}: |F|/bound = {np.quantile(r, q):.4f}")
    print(f"  max: {r.max():.6f}   violations: {int(np.sum(r > 1))}")


if __name__ == "__main__":
    main()
