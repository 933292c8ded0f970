"""Command-line driver.

Example::

    berryqpt xy-phase --lambda 0.3 --gamma 0.05 --modes 5000 --out out/xy
    berryqpt xy-scan --config scans/xy_scan.ini --workers 8
    berryqpt detect-qpt --config out/run1/manifest.json --out out/rerun

Exit codes: 0 success, 1 some records failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import SUBCOMMANDS, config_from_mapping, parse_config
from .errors import ConfigError
from .scan import run_scan

HELP = {
    "xy-phase": "closed-form XY ground-state phase at one point (plus per-mode table)",
    "xy-scan": "XY phase, intensive phase, gap and region over a (lambda, gamma) grid",
    "scaling": "order-of-limits table over M and gamma schedules at fixed lambda",
    "wilson": "Wilson-loop Berry phase of a family around circles",
    "curvature": "sum-over-states and plaquette curvature with the gap bound",
    "stone-bisect": "locate a degeneracy by bisecting a phase-rotating box",
    "detect-qpt": "shrinking-loop sequence and its contractibility verdict",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="berryqpt", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"berryqpt {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, help="INI or JSON config, or a manifest.json to re-run")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--tol", type=float, help="phase tolerance")
        p.add_argument("--band", type=int, help="tracked band index (0 = ground)")
        p.add_argument("--family", help="family identifier, e.g. spin-half or xy-qubit(3)")
        p.add_argument("--lambda", dest="lam", type=float, help="transverse field")
        p.add_argument("--gamma", type=float, help="anisotropy")
        p.add_argument("--modes", type=int, help="number of positive modes M (N = 2M + 1)")
        p.add_argument("--dat", action="store_true", help="also write a gnuplot .dat file")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _overrides(args) -> dict:
    o = {}
    for key in ("out", "workers", "tol", "band"):
        if getattr(args, key) is not None:
            o[key] = getattr(args, key)
    if args.dat:
        o["dat"] = True
    xy = {k: v for k, v in (("lambda", args.lam), ("gamma", args.gamma), ("modes", args.modes)) if v is not None}
    if xy:
        o["xy"] = xy
    if args.family is not None:
        o["family"] = {"name": args.family}
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _overrides(args)
        if args.config is not None:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            cfg = parse_config(text, overrides)
            if cfg.subcommand != args.subcommand:
                raise ConfigError(f"config is for {cfg.subcommand!r}, not {args.subcommand!r}",
                                  field="subcommand")
        else:
            cfg = config_from_mapping({"subcommand": args.subcommand, **overrides})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    result = run_scan(cfg)
    failed = result.manifest["failed_records"]
    print(f"{cfg.subcommand}: {len(result.records)} records, {failed} failed -> {cfg.out}")
    for key, val in result.summary.items():
        print(f"  {key}: {val}")
    if failed:
        for rec in result.records:
            if rec["error"]:
                print(f"  error: {rec['error']}", file=sys.stderr)
                break
    return result.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
