"""Parameter sweeps: task planning, ordered parallel execution and output files.

Every subcommand turns a validated :class:`ScanConfig` into a list of work
items. Items run in a process pool (or inline for one worker) and come back
in input order, so the data files do not depend on the worker count. Each
item yields one or more records whose column order is fixed in ``COLUMNS``.
A failing item produces records with an ``error`` message instead of
aborting the run.

Files written to ``config.out``: ``<subcommand>.csv``, ``<subcommand>.json``,
optional ``<subcommand>.dat`` (gnuplot), subcommand extras, and finally
``manifest.json``.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScanConfig, parse_config
from .detector import (
    area_scaling_slope,
    classify_sequence,
    phase_sequence,
    stone_bisection,
    xy_order_of_limits,
    xy_phase_sequence,
    LoopSequence,
)
from .errors import BerryQPTError
from .families import make_family
from .numerics import (
    LoopPath,
    curvature_plaquette,
    curvature_sum_over_states,
    wilson_loop_phase,
)
from .xy import (
    ModeGrid,
    XYPoint,
    classify_region,
    dispersion,
    dither_field,
    equatorial_mode,
    excitation_gap,
)

_SEQ_COLUMNS = ["r", "radius", "principal", "unwrapped", "segments", "refinement_error", "error"]

COLUMNS = {
    "xy-phase": ["lambda", "gamma", "phi", "modes", "lambda_used", "phase_total", "phase_mod_2pi",
                 "phase_intensive", "gap", "region", "k0", "phase_k0", "relative_phase", "error"],
    "xy-scan": ["lambda", "gamma", "phase_total", "phase_intensive", "gap", "region", "modes",
                "phase_mod_2pi", "lambda_used", "error"],
    "scaling": ["M", "gamma", "lambda_used", "phase_total", "phase_intensive", "k0", "phase_k0",
                "triviality_defect", "error"],
    "wilson": ["radius", "principal", "unwrapped", "segments", "refinement_error", "error"],
    "curvature": ["point", "mu", "nu", "F_sum_over_states", "F_plaquette", "gap", "bound", "error"],
    "stone-bisect": ["x", "y", "z", "box_diameter", "depth", "initial_winding", "candidates", "error"],
    "detect-qpt": _SEQ_COLUMNS,
}

MODE_COLUMNS = ["k", "x", "eps", "Lambda", "cos_theta", "phi_k"]
STEP_COLUMNS = ["depth", "axis", "cut", "winding_lower", "winding_upper", "kept", "diameter"]


# ---------------------------------------------------------------------------
# Formatting


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, (list, tuple)):
        return " ".join(format_value(x) for x in v)
    return str(v)


def csv_text(records: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([format_value(rec.get(c)) for c in columns])
    return buf.getvalue()


def emit_csv(records: list[dict], path, columns: list[str] | None = None) -> None:
    """Header plus one row per record; reals with 17 significant digits."""
    if columns is None:
        if not records:
            raise ValueError("columns are required for an empty record list")
        columns = list(records[0])
    Path(path).write_text(csv_text(records, columns), encoding="utf-8")


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def json_text(records: list[dict], columns: list[str] | None = None) -> str:
    if columns is not None:
        records = [{c: rec.get(c) for c in columns} for rec in records]
    return json.dumps(_jsonable(records), indent=1) + "\n"


def emit_json(records: list[dict], path, columns: list[str] | None = None) -> None:
    """Records as a JSON array; keys keep the column order."""
    Path(path).write_text(json_text(records, columns), encoding="utf-8")


def read_json(path) -> list[dict]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def dat_text(records: list[dict], columns: list[str]) -> str:
    """Whitespace-separated columns for gnuplot; missing values become NaN."""
    lines = ["# " + " ".join(columns)]
    for rec in records:
        cells = []
        for c in columns:
            s = format_value(rec.get(c))
            cells.append(s.replace(" ", "_") if s else "NaN")
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Work items. Each runs in a worker process from a plain-data payload.


@functools.lru_cache(maxsize=16)
def _family(spec_json: str):
    spec = json.loads(spec_json)
    name = spec.pop("name")
    return make_family(name, **spec)


def _family_of(cfg: dict):
    return _family(json.dumps(cfg["family"], sort_keys=True))


def _xy_point_record(cfg, lam, gamma):
    M = cfg["xy"]["modes"]
    grid = ModeGrid(M)
    lam_used, _ = dither_field(lam, gamma, grid)
    point = XYPoint(lam_used, gamma, cfg["xy"].get("phi", 0.0))
    sp = dispersion(point, grid)
    total = math.fsum(sp.phi)
    region = classify_region(XYPoint(lam, gamma), cfg["tolerances"].get("region_tol", 1e-12))
    return point, sp, {
        "lambda": lam, "gamma": gamma, "phi": point.phi, "modes": M, "lambda_used": lam_used,
        "phase_total": total, "phase_mod_2pi": math.fmod(total, 2 * math.pi),
        "phase_intensive": total / M ** cfg["xy"].get("exponent", 1.0),
        "gap": float(np.min(sp.Lambda)), "region": region.value,
    }


def _run_xy_scan(cfg, item):
    lam, gamma = item
    return [_xy_point_record(cfg, lam, gamma)[2]]


def _run_xy_phase(cfg, item):
    lam, gamma = cfg["xy"]["lambda"], cfg["xy"]["gamma"]
    point, sp, rec = _xy_point_record(cfg, lam, gamma)
    k0 = equatorial_mode(point.lam, sp.grid)
    rec["k0"] = k0
    rec["phase_k0"] = None if k0 is None else float(sp.phi[k0 - 1])
    rec["relative_phase"] = None if k0 is None else -float(sp.phi[k0 - 1])
    rec["_modes"] = [
        {"k": int(k), "x": float(x), "eps": float(e), "Lambda": float(L), "cos_theta": float(c), "phi_k": float(p)}
        for k, x, e, L, c, p in zip(sp.grid.k, sp.grid.x, sp.eps, sp.Lambda, sp.cos_theta, sp.phi)
    ]
    return [rec]


def _run_scaling(cfg, item):
    series = xy_order_of_limits(cfg["xy"]["lambda"], cfg["schedules"]["gamma"], [item],
                                exponent=cfg["xy"].get("exponent", 1.0))
    return [{c: r.get(c) for c in COLUMNS["scaling"] if c != "error"} for r in series.rows]


def _run_wilson(cfg, item):
    fam = _family_of(cfg)
    axes = tuple(cfg["loop"].get("axes", (0, 1)))
    loop = LoopPath.circle(cfg["loop"]["center"], item, axes)
    res = wilson_loop_phase(fam, loop, cfg["band"], cfg["tol"])
    return [{"radius": item, "principal": res.principal, "unwrapped": res.unwrapped,
             "segments": res.segments_used, "refinement_error": res.refinement_error}]


def _run_curvature(cfg, item):
    fam = _family_of(cfg)
    mu, nu = cfg["curvature"].get("mu", 0), cfg["curvature"].get("nu", 1)
    s = curvature_sum_over_states(fam, item, mu, nu, cfg["band"])
    plaq = curvature_plaquette(fam, item, mu, nu, cfg["band"], cfg["curvature"].get("h", 1e-3))
    return [{"point": list(item), "mu": mu, "nu": nu, "F_sum_over_states": s.F_value,
             "F_plaquette": plaq, "gap": s.gap, "bound": s.bound}]


def _run_stone(cfg, item):
    fam = _family_of(cfg)
    rep = stone_bisection(fam, cfg["box"]["lower"], cfg["box"]["upper"], cfg["band"],
                          cfg["box"].get("stop_diameter", 1e-4), cfg["box"].get("n_loops", 33))
    x, y, z = (float(v) for v in rep.located_point)
    steps = [{"depth": s["depth"], "axis": s["axis"], "cut": s["cut"], "winding_lower": s["windings"][0],
              "winding_upper": s["windings"][1], "kept": s["kept"], "diameter": s["diameter"]} for s in rep.log]
    return [{"x": x, "y": y, "z": z, "box_diameter": rep.box_diameter, "depth": rep.depth,
             "initial_winding": rep.initial_winding, "candidates": len(rep.candidates), "_steps": steps}]


def _run_detect(cfg, item):
    if cfg["family"]["name"] == "xy":
        radii = cfg["schedules"]["gamma"]
        results = xy_phase_sequence(cfg["xy"]["lambda"], radii, cfg["xy"]["modes"])
    else:
        radii = cfg["schedules"]["radius"]
        seq = LoopSequence.circles(cfg["loop"]["center"], radii, tuple(cfg["loop"].get("axes", (0, 1))))
        results = phase_sequence(_family_of(cfg), seq, cfg["band"], cfg["tol"])
    return [{"r": r, "radius": rho, "principal": res.principal, "unwrapped": res.unwrapped,
             "segments": res.segments_used, "refinement_error": res.refinement_error}
            for r, (rho, res) in enumerate(zip(radii, results))]


_RUNNERS = {
    "xy-phase": _run_xy_phase,
    "xy-scan": _run_xy_scan,
    "scaling": _run_scaling,
    "wilson": _run_wilson,
    "curvature": _run_curvature,
    "stone-bisect": _run_stone,
    "detect-qpt": _run_detect,
}


def plan(cfg: ScanConfig) -> list:
    sub = cfg.subcommand
    if sub == "xy-scan":
        return [(lam, g) for lam in cfg.grids["lambda"] for g in cfg.grids["gamma"]]
    if sub == "scaling":
        return list(cfg.schedules["modes"])
    if sub == "wilson":
        return list(cfg.schedules.get("radius", [cfg.loop.get("radius")]))
    if sub == "curvature":
        return [tuple(p) for p in cfg.curvature["points"]]
    return [None]


def _execute(payload):
    """Worker entry point: run one item, turning library errors into an error record."""
    sub, cfg, item = payload
    try:
        return _RUNNERS[sub](cfg, item)
    except (BerryQPTError, ValueError, IndexError, np.linalg.LinAlgError) as exc:
        rec = {"error": f"{type(exc).__name__}: {exc}"}
        if sub == "xy-scan":
            rec.update({"lambda": item[0], "gamma": item[1], "modes": cfg["xy"]["modes"]})
        elif sub == "scaling":
            rec["M"] = item
        elif sub == "wilson":
            rec["radius"] = item
        elif sub == "curvature":
            rec["point"] = list(item)
        return [rec]


def execute(cfg: ScanConfig, items: list, workers: int) -> list[dict]:
    d = dataclasses.asdict(cfg)
    payloads = [(cfg.subcommand, d, it) for it in items]
    if workers <= 1 or len(items) <= 1:
        chunks = [_execute(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_execute, payloads))
    records = [rec for chunk in chunks for rec in chunk]
    for rec in records:
        rec.setdefault("error", "")
    return records


# ---------------------------------------------------------------------------
# Run orchestration


@dataclass
class RunResult:
    records: list
    files: dict
    manifest: dict
    exit_code: int
    summary: dict = field(default_factory=dict)


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _summary(cfg: ScanConfig, records: list[dict]) -> dict:
    sub = cfg.subcommand
    if sub == "detect-qpt":
        ok = [r for r in records if not r["error"]]
        if len(ok) < 4:
            return {"classification": None}
        verdict = classify_sequence([r["principal"] for r in ok], cfg.get_tolerance("limit_tol"),
                                    cfg.get_tolerance("tail_fraction"), cfg.get_tolerance("spread_tol"))
        out = {"classification": verdict.classification.value, "fitted_limit": verdict.fitted_limit,
               "spread": verdict.spread, "limit_tol": verdict.limit_tol, "spread_tol": verdict.spread_tol}
        if verdict.classification.value == "contractible" and cfg.family.get("name") != "xy":
            try:
                out["area_slope"] = area_scaling_slope([r["radius"] for r in ok], [r["principal"] for r in ok])
            except BerryQPTError:
                out["area_slope"] = None
        return out
    if sub == "scaling":
        ok = [r for r in records if not r["error"]]
        if not ok or ok[0]["k0"] is None:
            return {"gamma_first_limit": None, "size_first_limit": None}
        Ms = sorted({r["M"] for r in ok})
        gs = sorted({r["gamma"] for r in ok})
        table = {(r["M"], r["gamma"]): r["phase_k0"] for r in ok}
        settled = [g for g in gs if len(Ms) >= 2 and abs(table[Ms[-1], g] - table[Ms[-2], g]) < 0.05]
        return {"gamma_first_limit": table[Ms[-1], gs[0]],
                "size_first_limit": table[Ms[-1], settled[0]] if settled else None,
                "size_first_gamma": settled[0] if settled else None}
    return {}


def run_scan(cfg: ScanConfig, out_dir=None, workers: int | None = None) -> RunResult:
    """Run a validated configuration and write its data files and manifest."""
    started = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = cfg.workers if workers is None else workers
    records = execute(cfg, plan(cfg), workers)
    sub = cfg.subcommand
    columns = COLUMNS[sub]

    texts = {f"{sub}.csv": csv_text(records, columns), f"{sub}.json": json_text(records, columns)}
    if cfg.dat:
        texts[f"{sub}.dat"] = dat_text(records, columns)
    extras = {"_modes": ("modes", MODE_COLUMNS), "_steps": ("steps", STEP_COLUMNS)}
    for key, (stem, cols) in extras.items():
        rows = [row for rec in records for row in rec.get(key, [])]
        if rows:
            texts[f"{stem}.csv"] = csv_text(rows, cols)
    summary = _summary(cfg, records)
    if summary:
        texts["summary.json"] = json.dumps(_jsonable(summary), indent=1) + "\n"
    for name, text in texts.items():
        (out / name).write_text(text, encoding="utf-8")

    dithers = [{"lambda": r["lambda"], "gamma": r["gamma"], "lambda_used": r["lambda_used"]}
               for r in records if "lambda_used" in r and "lambda" in r and r["lambda_used"] != r["lambda"]]
    dithers += [{"M": r["M"], "gamma": r["gamma"], "lambda": cfg.xy.get("lambda"), "lambda_used": r["lambda_used"]}
                for r in records if sub == "scaling" and not r["error"] and r["lambda_used"] != cfg.xy.get("lambda")]
    failed = sum(1 for r in records if r["error"])
    row_lines = texts[f"{sub}.csv"].splitlines()[1:]
    manifest = {
        "tool": "berryqpt",
        "version": __version__,
        "config": _jsonable(cfg.to_dict()),
        "dithers": _jsonable(dithers),
        "wall_clock_seconds": time.perf_counter() - started,
        "workers": workers,
        "files": {name: _sha256(text) for name, text in sorted(texts.items())},
        "record_checksums": [_sha256(line) for line in row_lines],
        "records": len(records),
        "failed_records": failed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return RunResult(records, texts, manifest, 1 if failed else 0, summary)


def rerun_manifest(path, out_dir, workers: int | None = None) -> RunResult:
    """Re-run the configuration stored in a manifest."""
    cfg = parse_config(Path(path).read_text(encoding="utf-8"))
    return run_scan(cfg, out_dir, workers)
