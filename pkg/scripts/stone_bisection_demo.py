"""Locate a spin-half degeneracy by bisecting a phase-rotating box.

    python scripts/stone_bisection_demo.py --center 0.31 -0.47 0.12
"""

import argparse
import time

import numpy as np

from berryqpt.detector import SurfaceLoopFamily, stone_bisection, surface_winding
from berryqpt.families import spin_half


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--center", type=float, nargs=3, default=[0.0, 0.0, 0.0], help="degeneracy B0")
    ap.add_argument("--half-width", type=float, default=1.0)
    ap.add_argument("--stop", type=float, default=1e-4, help="stop diameter")
    ap.add_argument("-v", "--verbose", action="store_true", help="print every cut")
    args = ap.parse_args()

    fam = spin_half(args.center)
    lo, hi = -args.half_width * np.ones(3), args.half_width * np.ones(3)
    sphere = surface_winding(fam, SurfaceLoopFamily.sphere(np.zeros(3), args.half_width))
    print(f"sphere of radius {args.half_width}: winding {sphere.winding} ({sphere.classification.value})")
    t0 = time.perf_counter()
    rep = stone_bisection(fam, lo, hi, stop_diameter=args.stop)
    dt = time.perf_counter() - t0
    if args.verbose:
        for step in rep.log:
            print(f"  depth {step['depth']:3d} axis {'xyz'[step['axis']]} cut {step['cut']:+.6e} "
                  f"windings {step['windings']} diameter {step['diameter']:.3e}")
    err = np.linalg.norm(rep.located_point - np.asarray(args.center))
    print(f"initial winding {rep.initial_winding}, {rep.depth} cuts, {dt:.2f} s")
    print(f"located {np.array2string(rep.located_point, precision=8)}, distance to B0 {err:.2e}")
    if rep.candidates:
        print(f"{len(rep.candidates)} extra phase-rotating region(s) recorded")


if __name__ == "__main__":
    main()
