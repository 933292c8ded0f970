"""Scan configuration: parsing, validation and the resolved, JSON-able form.

Two input formats are accepted. JSON (text starting with ``{``), either a
plain config object or a run manifest carrying one under ``"config"``; or an
INI-style text of ``key = value`` lines with ``[section]`` headers. Keys
before the first header belong to the run itself::

    subcommand = xy-scan
    workers = 4
    out = results/xy
    tol = 1e-9

    [xy]
    modes = 100

    [grid.lambda]
    start = -2
    stop = 2
    count = 41

    [grid.gamma]
    start = 0.01
    stop = 1
    count = 20
    spacing = log

An axis section (``grid.*`` or ``schedule.*``) holds either
``start/stop/count[/spacing]`` with spacing ``linear`` or ``log``, or an
explicit comma-separated ``values`` list. Vectors (``center``, ``lower``,
``axes``...) are comma-separated; ``curvature.points`` separates points with
``;``.
"""

from __future__ import annotations

import configparser
import copy
import json
import math
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

SUBCOMMANDS = ("xy-phase", "xy-scan", "scaling", "wilson", "curvature", "stone-bisect", "detect-qpt")

_RUN_KEYS = {"subcommand", "workers", "out", "tol", "band", "dat"}
_SECTION_KEYS = {
    "family": {"name", "center", "k", "modes", "path"},
    "xy": {"lambda", "gamma", "phi", "modes", "exponent"},
    "loop": {"center", "radius", "axes"},
    "box": {"lower", "upper", "stop_diameter", "n_loops"},
    "curvature": {"points", "mu", "nu", "h"},
    "tolerances": {"limit_tol", "spread_tol", "tail_fraction", "region_tol"},
}
_AXIS_KEYS = {"start", "stop", "count", "spacing", "values"}
_GRID_AXES = {"lambda", "gamma"}
_SCHEDULE_AXES = {"gamma", "modes", "radius"}


def axis_values(spec: dict, where: str) -> list[float]:
    """Resolve an axis section into its list of values."""
    unknown = set(spec) - _AXIS_KEYS
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}", field=f"{where}.{sorted(unknown)[0]}")
    if "values" in spec:
        if set(spec) - {"values"}:
            raise ConfigError("give either 'values' or start/stop/count, not both", field=where)
        vals = _floats(spec["values"], f"{where}.values")
        if not vals:
            raise ConfigError("empty values list", field=f"{where}.values")
        return vals
    for key in ("start", "stop", "count"):
        if key not in spec:
            raise ConfigError(f"missing {key!r}", field=f"{where}.{key}")
    start, stop = _float(spec["start"], f"{where}.start"), _float(spec["stop"], f"{where}.stop")
    count = _int(spec["count"], f"{where}.count")
    if count < 1:
        raise ConfigError("count must be >= 1", field=f"{where}.count")
    spacing = str(spec.get("spacing", "linear")).strip()
    if spacing == "linear":
        return [float(v) for v in np.linspace(start, stop, count)]
    if spacing == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError("log spacing needs positive endpoints", field=f"{where}.start")
        return [float(v) for v in np.geomspace(start, stop, count)]
    raise ConfigError(f"spacing must be 'linear' or 'log', got {spacing!r}", field=f"{where}.spacing")


def _float(v, where) -> float:
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {v!r}", field=where) from None
    if not math.isfinite(x):
        raise ConfigError(f"expected a finite number, got {v!r}", field=where)
    return x


def _int(v, where) -> int:
    x = _float(v, where)
    if x != int(x):
        raise ConfigError(f"expected an integer, got {v!r}", field=where)
    return int(x)


def _floats(v, where) -> list[float]:
    if isinstance(v, str):
        v = [p for p in v.replace(" ", "").split(",") if p]
    if not isinstance(v, (list, tuple)):
        v = [v]
    return [_float(x, where) for x in v]


def _bool(v, where) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}", field=where)


@dataclass
class ScanConfig:
    subcommand: str
    family: dict = field(default_factory=dict)
    xy: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    schedules: dict = field(default_factory=dict)
    loop: dict = field(default_factory=dict)
    box: dict = field(default_factory=dict)
    curvature: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    tol: float = 1e-9
    band: int = 0
    out: str = "out"
    workers: int = 1
    dat: bool = False

    def to_dict(self) -> dict:
        """Resolved form: axes as explicit value lists, so re-parsing reproduces the run exactly."""
        d = asdict(self)
        d["grids"] = {k: {"values": v} for k, v in self.grids.items()}
        d["schedules"] = {k: {"values": v} for k, v in self.schedules.items()}
        return d

    def get_tolerance(self, key: str):
        return self.tolerances.get(key, TOLERANCE_DEFAULTS[key])


TOLERANCE_DEFAULTS = {"limit_tol": 0.1, "spread_tol": 0.02, "tail_fraction": 0.5, "region_tol": 1e-12}


def _ini_to_raw(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError("syntax error" if line is not None else f"syntax error: {exc}",
                          line=None if line is None else line - 1) from exc
    raw = {"grids": {}, "schedules": {}}
    for name in parser.sections():
        items = dict(parser.items(name))
        if name == "run":
            raw.update(items)
        elif name.startswith("grid."):
            raw["grids"][name[5:]] = items
        elif name.startswith("schedule."):
            raw["schedules"][name[9:]] = items
        else:
            raw[name] = items
    return raw


def parse_config(text: str, overrides: dict | None = None) -> ScanConfig:
    """Parse and validate a scan configuration.

    ``overrides`` is a raw mapping merged over the parsed text (CLI flags),
    e.g. ``{"workers": 8, "xy": {"gamma": 0.1}}``.
    """
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
        if isinstance(raw, dict) and "config" in raw and "tool" in raw:
            raw = raw["config"]
        ini = False
    else:
        raw = _ini_to_raw(text)
        ini = True
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    raw = copy.deepcopy(raw)
    for key, val in (overrides or {}).items():
        if isinstance(val, dict):
            raw.setdefault(key, {}).update(val)
        else:
            raw[key] = val
    try:
        return _validate(raw)
    except ConfigError as exc:
        if ini and exc.line is None and exc.field:
            line = _field_line(text, exc.field)
            if line is not None:
                raise ConfigError(str(exc).rsplit(" (", 1)[0], field=exc.field, line=line) from None
        raise


def _field_line(text: str, where: str) -> int | None:
    """1-based line of the INI entry for a dotted field path, if present."""
    parts = where.split(".")
    key = parts[-1]
    section = "run" if len(parts) == 1 else ".".join(parts[:-1])
    current = "run"
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if current == where:
                return n
        elif current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return n
    return None


def config_from_mapping(raw: dict) -> ScanConfig:
    """Validate an already-structured mapping (same shape as the JSON format)."""
    return _validate(copy.deepcopy(raw))


def _validate(raw: dict) -> ScanConfig:
    known = _RUN_KEYS | set(_SECTION_KEYS) | {"grids", "schedules"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", field=key)
    sub = raw.get("subcommand")
    if sub not in SUBCOMMANDS:
        raise ConfigError(f"subcommand must be one of {', '.join(SUBCOMMANDS)}; got {sub!r}", field="subcommand")
    cfg = ScanConfig(subcommand=sub)
    if "workers" in raw:
        cfg.workers = _int(raw["workers"], "workers")
        if cfg.workers < 1:
            raise ConfigError("workers must be >= 1", field="workers")
    if "tol" in raw:
        cfg.tol = _float(raw["tol"], "tol")
        if cfg.tol <= 0:
            raise ConfigError("tolerance must be > 0", field="tol")
    if "band" in raw:
        cfg.band = _int(raw["band"], "band")
        if cfg.band < 0:
            raise ConfigError("band must be >= 0", field="band")
    if "out" in raw:
        cfg.out = str(raw["out"])
    if "dat" in raw:
        cfg.dat = _bool(raw["dat"], "dat")

    for section, keys in _SECTION_KEYS.items():
        items = raw.get(section, {}) or {}
        if not isinstance(items, dict):
            raise ConfigError("expected a section", field=section)
        for key in items:
            if key not in keys:
                raise ConfigError(f"unknown key {key!r}", field=f"{section}.{key}")

    fam = raw.get("family", {}) or {}
    if fam:
        if "name" not in fam:
            raise ConfigError("missing family name", field="family.name")
        cfg.family["name"] = str(fam["name"]).strip()
        if not _known_family(cfg.family["name"]):
            raise ConfigError(f"unknown family {cfg.family['name']!r}", field="family.name")
        if "center" in fam:
            cfg.family["center"] = _floats(fam["center"], "family.center")
        for key in ("k", "modes"):
            if key in fam:
                cfg.family[key] = _int(fam[key], f"family.{key}")
                if cfg.family[key] < 1:
                    raise ConfigError(f"{key} must be >= 1", field=f"family.{key}")
        if "path" in fam:
            cfg.family["path"] = str(fam["path"])

    xy = raw.get("xy", {}) or {}
    for key in ("lambda", "gamma", "phi", "exponent"):
        if key in xy:
            cfg.xy[key] = _float(xy[key], f"xy.{key}")
    if cfg.xy.get("gamma", 0.0) < 0:
        raise ConfigError("gamma must be >= 0", field="xy.gamma")
    if "modes" in xy:
        cfg.xy["modes"] = _int(xy["modes"], "xy.modes")
        if cfg.xy["modes"] < 1:
            raise ConfigError("modes must be >= 1", field="xy.modes")

    for kind, allowed, target in (("grids", _GRID_AXES, cfg.grids), ("schedules", _SCHEDULE_AXES, cfg.schedules)):
        prefix = "grid" if kind == "grids" else "schedule"
        for axis, spec in (raw.get(kind, {}) or {}).items():
            if axis not in allowed:
                raise ConfigError(f"unknown axis {axis!r}", field=f"{prefix}.{axis}")
            if not isinstance(spec, dict):
                raise ConfigError("expected an axis section", field=f"{prefix}.{axis}")
            target[axis] = axis_values(spec, f"{prefix}.{axis}")
    for where, vals in (("grid.gamma", cfg.grids.get("gamma", [])), ("schedule.gamma", cfg.schedules.get("gamma", []))):
        if any(v < 0 for v in vals):
            raise ConfigError("gamma must be >= 0", field=where)
    if "modes" in cfg.schedules:
        if any(v != int(v) or v < 1 for v in cfg.schedules["modes"]):
            raise ConfigError("modes must be positive integers", field="schedule.modes")
        cfg.schedules["modes"] = [int(v) for v in cfg.schedules["modes"]]
    if any(v <= 0 for v in cfg.schedules.get("radius", [])):
        raise ConfigError("radii must be > 0", field="schedule.radius")

    loop = raw.get("loop", {}) or {}
    if "center" in loop:
        cfg.loop["center"] = _floats(loop["center"], "loop.center")
    if "radius" in loop:
        cfg.loop["radius"] = _float(loop["radius"], "loop.radius")
        if cfg.loop["radius"] <= 0:
            raise ConfigError("radius must be > 0", field="loop.radius")
    if "axes" in loop:
        axes = [int(a) for a in _floats(loop["axes"], "loop.axes")]
        if len(axes) != 2 or axes[0] == axes[1] or min(axes) < 0:
            raise ConfigError("axes must be two distinct non-negative indices", field="loop.axes")
        cfg.loop["axes"] = axes

    box = raw.get("box", {}) or {}
    for key in ("lower", "upper"):
        if key in box:
            cfg.box[key] = _floats(box[key], f"box.{key}")
    if "lower" in cfg.box and "upper" in cfg.box:
        if len(cfg.box["lower"]) != 3 or len(cfg.box["upper"]) != 3:
            raise ConfigError("box corners need 3 components", field="box.lower")
        if any(u <= l for l, u in zip(cfg.box["lower"], cfg.box["upper"])):
            raise ConfigError("box.upper must exceed box.lower componentwise", field="box.upper")
    if "stop_diameter" in box:
        cfg.box["stop_diameter"] = _float(box["stop_diameter"], "box.stop_diameter")
        if cfg.box["stop_diameter"] <= 0:
            raise ConfigError("stop_diameter must be > 0", field="box.stop_diameter")
    if "n_loops" in box:
        cfg.box["n_loops"] = _int(box["n_loops"], "box.n_loops")
        if cfg.box["n_loops"] < 3:
            raise ConfigError("n_loops must be >= 3", field="box.n_loops")

    curv = raw.get("curvature", {}) or {}
    if "points" in curv:
        pts = curv["points"]
        if isinstance(pts, str):
            pts = [p for p in pts.split(";") if p.strip()]
        cfg.curvature["points"] = [_floats(p, "curvature.points") for p in pts]
    for key in ("mu", "nu"):
        if key in curv:
            cfg.curvature[key] = _int(curv[key], f"curvature.{key}")
    if "h" in curv:
        cfg.curvature["h"] = _float(curv["h"], "curvature.h")
        if cfg.curvature["h"] <= 0:
            raise ConfigError("h must be > 0", field="curvature.h")

    tols = raw.get("tolerances", {}) or {}
    for key in tols:
        cfg.tolerances[key] = _float(tols[key], f"tolerances.{key}")
        if cfg.tolerances[key] <= 0:
            raise ConfigError("tolerance must be > 0", field=f"tolerances.{key}")

    _check_required(cfg)
    return cfg


def _known_family(name: str) -> bool:
    return name in ("two-level-real", "spin-half", "xy-qubit", "expr", "xy") or bool(
        re.fullmatch(r"xy-qubit\(\d+\)", name))


def _require(cond, message, where):
    if not cond:
        raise ConfigError(message, field=where)


def _check_required(cfg: ScanConfig) -> None:
    sub = cfg.subcommand
    if sub == "xy-phase":
        for key in ("lambda", "gamma", "modes"):
            _require(key in cfg.xy, f"xy-phase needs xy.{key}", f"xy.{key}")
    elif sub == "xy-scan":
        for axis in ("lambda", "gamma"):
            _require(axis in cfg.grids, f"xy-scan needs a grid.{axis} section", f"grid.{axis}")
        _require("modes" in cfg.xy, "xy-scan needs xy.modes", "xy.modes")
    elif sub == "scaling":
        _require("lambda" in cfg.xy, "scaling needs xy.lambda", "xy.lambda")
        for axis in ("gamma", "modes"):
            _require(axis in cfg.schedules, f"scaling needs a schedule.{axis} section", f"schedule.{axis}")
    elif sub == "detect-qpt" and cfg.family.get("name") == "xy":
        for key in ("lambda", "modes"):
            _require(key in cfg.xy, f"detect-qpt on the XY chain needs xy.{key}", f"xy.{key}")
        _require("gamma" in cfg.schedules, "detect-qpt on the XY chain needs schedule.gamma", "schedule.gamma")
    else:
        _require("name" in cfg.family, f"{sub} needs a [family] section", "family.name")
        if sub == "wilson":
            _require("center" in cfg.loop, "wilson needs loop.center", "loop.center")
            _require("radius" in cfg.loop or "radius" in cfg.schedules,
                     "wilson needs loop.radius or schedule.radius", "loop.radius")
        elif sub == "curvature":
            _require(bool(cfg.curvature.get("points")), "curvature needs curvature.points", "curvature.points")
        elif sub == "stone-bisect":
            for key in ("lower", "upper"):
                _require(key in cfg.box, f"stone-bisect needs box.{key}", f"box.{key}")
        elif sub == "detect-qpt":
            _require("center" in cfg.loop, "detect-qpt needs loop.center", "loop.center")
            _require("radius" in cfg.schedules, "detect-qpt needs schedule.radius", "schedule.radius")
    if sub == "detect-qpt":
        key = "gamma" if cfg.family.get("name") == "xy" else "radius"
        vals = cfg.schedules[key]
        _require(len(vals) >= 4, "a loop sequence needs at least 4 entries", f"schedule.{key}")
        _require(all(b < a for a, b in zip(vals, vals[1:])),
                 "the loop sequence must shrink strictly", f"schedule.{key}")
