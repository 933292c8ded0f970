"""Critical-point detection from Berry phases.

* shrinking-loop sequences: a sequence of loops contracting to a point whose
  Berry phases do not tend to zero marks that point as critical;
* Stone-style surfaces: a closed surface swept by loops, whose tracked phase
  winds by 2 pi l with l != 0, encloses a degeneracy; bisecting the enclosed
  box while keeping a phase-rotating half localizes it;
* XY order-of-limits tables (fixed size then gamma -> 0 versus size -> infinity
  then gamma -> 0) and intensive phases.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BisectionError,
    ConvergenceError,
    DegeneracyError,
    TooFewPointsError,
    UnwrapError,
)
from .numerics import (
    BerryPhaseResult,
    HamiltonianFamily,
    LoopPath,
    as_point,
    band_vectors,
    wilson_loop_phase,
    wrap_phase,
)
from .xy import ModeGrid, XYPoint, dispersion, dither_field, equatorial_mode, total_berry_phase

log = logging.getLogger(__name__)

TWO_PI = 2 * math.pi

# Verdict defaults: the tail must settle within SPREAD_TOL and sit farther
# than LIMIT_TOL from zero to count as non-contractible.
LIMIT_TOL = 0.1
SPREAD_TOL = 0.02


class AdiabaticityWarning(RuntimeWarning):
    """||d_mu H|j>|| grows along a loop sequence, so its finiteness is in doubt."""


# ---------------------------------------------------------------------------
# Shrinking loop sequences


@dataclass(frozen=True)
class LoopSequence:
    limit_point: np.ndarray
    radii: np.ndarray
    generator: Callable[[int, float], LoopPath]

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        if radii.ndim != 1 or len(radii) < 1 or np.any(radii <= 0):
            raise ValueError("radii must be a non-empty list of positive numbers")
        if np.any(np.diff(radii) >= 0):
            raise ValueError("radii must be strictly decreasing")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "limit_point", as_point(self.limit_point))

    @property
    def r_max(self) -> int:
        return len(self.radii)

    def loop(self, r: int) -> LoopPath:
        return self.generator(r, float(self.radii[r]))

    @classmethod
    def circles(cls, limit_point, radii, axes=(0, 1)) -> "LoopSequence":
        c = as_point(limit_point)
        return cls(c, radii, lambda r, rho: LoopPath.circle(c, rho, axes, label=f"r={r}"))

    @classmethod
    def geometric(cls, limit_point, r_max: int, axes=(0, 1), first: float = 1.0,
                  ratio: float = 0.5) -> "LoopSequence":
        """Circles of radius first * ratio**r, r = 0..r_max-1."""
        return cls.circles(limit_point, first * ratio ** np.arange(r_max), axes)


def phase_sequence(family: HamiltonianFamily, seq: LoopSequence, band: int = 0,
                   tol: float = 1e-9, probes: int = 8) -> list[BerryPhaseResult]:
    """Wilson-loop phase of ``band`` around each loop of the sequence, in order.

    Also probes ||d_mu H|j>|| at a few points per loop and warns with
    AdiabaticityWarning when it grows steadily across the sequence.
    """
    out, numerators = [], []
    for r in range(seq.r_max):
        loop = seq.loop(r)
        try:
            out.append(wilson_loop_phase(family, loop, band, tol))
        except DegeneracyError as exc:
            raise DegeneracyError(f"loop r={r}: {exc}", where=exc.where, index=r) from exc
        pts = loop.sample(probes)
        vecs = band_vectors(family, pts, band)
        numerators.append(max(
            float(np.linalg.norm(family.partial(p, mu) @ v))
            for p, v in zip(pts, vecs) for mu in range(family.n_params)
        ))
        log.debug("loop r=%d radius=%.3e phase=%.12g max||dH|j>||=%.3e", r, seq.radii[r],
                  out[-1].principal, numerators[-1])
    n = np.asarray(numerators)
    if len(n) >= 3 and np.all(np.diff(n) > 0) and n[-1] > 10 * n[0]:
        warnings.warn(
            f"||d_mu H|j>|| grows from {n[0]:.3e} to {n[-1]:.3e} along the sequence",
            AdiabaticityWarning, stacklevel=2,
        )
    return out


def xy_phase_sequence(lam: float, gammas: Sequence[float], modes: int) -> list[BerryPhaseResult]:
    """Closed-form XY ground-state phases for loops phi: 0 -> pi at (lam, gamma_r).

    In the (gamma cos 2phi, gamma sin 2phi, lam) embedding these loops are
    circles of radius gamma_r shrinking onto the point (lam, gamma = 0).
    """
    grid = ModeGrid(modes)
    out = []
    for g in gammas:
        total = total_berry_phase(XYPoint(lam, g), grid)
        out.append(BerryPhaseResult(wrap_phase(total), total, 0, 0.0))
    return out


class Classification(str, enum.Enum):
    CONTRACTIBLE = "contractible"
    NON_CONTRACTIBLE = "non-contractible"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class SequenceVerdict:
    phases: list
    fitted_limit: float
    spread: float
    classification: Classification
    limit_tol: float
    spread_tol: float


def _principal_values(phases) -> np.ndarray:
    vals = [p.principal if isinstance(p, BerryPhaseResult) else p for p in phases]
    return wrap_phase(np.asarray(vals, dtype=float))


def classify_sequence(phases, tol: float = LIMIT_TOL, tail_fraction: float = 0.5,
                      spread_tol: float = SPREAD_TOL) -> SequenceVerdict:
    """Decide whether a phase sequence tends to zero (mod 2 pi).

    The tail (last ``tail_fraction`` of entries, at least 2) is fitted by its
    circular mean. Non-contractible: |mean| > tol and the tail spread is below
    ``spread_tol``. Contractible: every tail entry within ``tol`` of zero.
    Anything else is inconclusive.
    """
    vals = _principal_values(phases)
    if len(vals) < 4:
        raise TooFewPointsError(f"need at least 4 phases, got {len(vals)}")
    n_tail = max(2, int(math.ceil(tail_fraction * len(vals))))
    tail = vals[-n_tail:]
    resultant = np.mean(np.exp(1j * tail))
    if abs(resultant) < 1e-12:
        limit, spread = math.nan, math.inf
    else:
        limit = wrap_phase(float(np.angle(resultant)))
        dev = wrap_phase(tail - limit)
        spread = float(np.max(dev) - np.min(dev))
    if np.all(np.abs(tail) <= tol):
        cls = Classification.CONTRACTIBLE
    elif math.isfinite(limit) and abs(limit) > tol and spread < spread_tol:
        cls = Classification.NON_CONTRACTIBLE
    else:
        cls = Classification.INCONCLUSIVE
    return SequenceVerdict(list(vals), limit, spread, cls, tol, spread_tol)


def area_scaling_slope(radii, phases) -> float:
    """Least-squares slope of log|phase| against log radius (2 for smooth flux)."""
    vals = np.abs(_principal_values(phases))
    radii = np.asarray(radii, dtype=float)
    keep = vals > 0
    if keep.sum() < 2:
        raise TooFewPointsError("need at least 2 nonzero phases to fit a slope")
    return float(np.polyfit(np.log(radii[keep]), np.log(vals[keep]), 1)[0])


# ---------------------------------------------------------------------------
# Stone surfaces and bisection


def _latitude_directions(theta: float, axis: int):
    """Unit vectors on the latitude circle at polar angle theta about ``axis``."""
    others = [a for a in range(3) if a != axis]

    def dirs(t):
        n = np.empty((len(t), 3))
        a = 2 * np.pi * t
        n[:, others[0]] = math.sin(theta) * np.cos(a)
        n[:, others[1]] = math.sin(theta) * np.sin(a)
        n[:, axis] = math.cos(theta)
        return n

    return dirs


@dataclass(frozen=True)
class SurfaceLoopFamily:
    """Loops sweeping a closed surface, indexed by a sweep parameter s in [0, 1].

    ``loop_at(0)`` and ``loop_at(1)`` are single points. ``loops`` holds the
    initial uniform sweep of ``n_loops`` loops and ``adjacency`` the largest
    pointwise distance between consecutive ones.
    """

    loop_at: Callable[[float], LoopPath]
    n_loops: int = 33
    label: str = ""

    @property
    def sweep(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_loops)

    @property
    def loops(self) -> list:
        return [self.loop_at(float(s)) for s in self.sweep]

    @property
    def adjacency(self) -> float:
        pts = [lp.sample(64) for lp in self.loops]
        return max(float(np.max(np.linalg.norm(a - b, axis=1))) for a, b in zip(pts, pts[1:]))

    @classmethod
    def sphere(cls, center, radius: float, n_loops: int = 33, axis: int = 2) -> "SurfaceLoopFamily":
        c = as_point(center)

        def loop_at(s):
            d = _latitude_directions(math.pi * s, axis)
            return LoopPath(lambda t: c + radius * d(t), 3, label=f"s={s:.6g}")

        return cls(loop_at, n_loops, label=f"sphere r={radius}")

    @classmethod
    def box(cls, lower, upper, n_loops: int = 33, axis: int = 2) -> "SurfaceLoopFamily":
        """Boundary of an axis-aligned box, swept by radially projected latitude circles."""
        lo, hi = as_point(lower), as_point(upper)
        if len(lo) != 3 or np.any(hi <= lo):
            raise ValueError("box needs 3-d corners with upper > lower")
        c, half = (lo + hi) / 2, (hi - lo) / 2

        def loop_at(s):
            d = _latitude_directions(math.pi * s, axis)

            def curve(t):
                n = d(t)
                with np.errstate(divide="ignore"):
                    scale = np.min(half / np.abs(n), axis=1)
                return c + scale[:, None] * n

            return LoopPath(curve, 3, label=f"s={s:.6g}")

        return cls(loop_at, n_loops, label=f"box {lo.tolist()}..{hi.tolist()}")


class SurfaceKind(str, enum.Enum):
    ROTATING = "phase-rotating"
    PRESERVING = "phase-preserving"


@dataclass(frozen=True)
class WindingReport:
    sweep: np.ndarray
    phases: np.ndarray
    winding: int
    raw_winding: float
    classification: SurfaceKind


def surface_winding(family: HamiltonianFamily, surface: SurfaceLoopFamily, band: int = 0,
                    tol: float = 1e-6, refine_jump: float = math.pi / 4, max_jump: float = math.pi / 2,
                    max_level: int = 8) -> WindingReport:
    """Track the loop phase continuously across the surface and count its winding l.

    Intervals of the sweep whose phase jump exceeds ``refine_jump`` are split
    (at most ``max_level`` times). A jump still above ``max_jump`` afterwards
    raises UnwrapError: the sweep cannot be unwrapped unambiguously there.
    """

    def phase(s):
        return wilson_loop_phase(family, surface.loop_at(s), band, tol).principal

    sweep = [float(s) for s in surface.sweep]
    values = [phase(s) for s in sweep]
    level = 0
    while True:
        jumps = wrap_phase(np.diff(values))
        big = np.nonzero(np.abs(jumps) > refine_jump)[0]
        if len(big) == 0 or level >= max_level:
            break
        for i in big[::-1]:
            mid = (sweep[i] + sweep[i + 1]) / 2
            sweep.insert(i + 1, mid)
            values.insert(i + 1, phase(mid))
        level += 1
    worst = int(np.argmax(np.abs(jumps)))
    if abs(jumps[worst]) > max_jump:
        raise UnwrapError(
            f"phase jump {jumps[worst]:.3f} between s={sweep[worst]:.6g} and s={sweep[worst + 1]:.6g}"
        )
    trace = np.concatenate([[0.0], np.cumsum(jumps)])
    raw = trace[-1] / TWO_PI
    l = int(round(raw))
    if abs(raw - l) > 0.05:
        raise UnwrapError(f"winding {raw:.4f} is not close to an integer")
    kind = SurfaceKind.ROTATING if l != 0 else SurfaceKind.PRESERVING
    return WindingReport(np.asarray(sweep), trace, l, float(raw), kind)


@dataclass
class BisectionReport:
    located_point: np.ndarray
    box_diameter: float
    depth: int
    initial_winding: int
    lower: np.ndarray
    upper: np.ndarray
    log: list = field(default_factory=list)
    candidates: list = field(default_factory=list)


# Cut positions tried, as fractions of the edge.
CUT_FRACTIONS = (0.5, 0.45, 0.55, 0.4, 0.6)


def _face_min_gap(family, lo, hi, axis, cut, band, n=7):
    others = [a for a in range(3) if a != axis]
    u = np.linspace(lo[others[0]], hi[others[0]], n)
    v = np.linspace(lo[others[1]], hi[others[1]], n)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.empty((U.size, 3))
    pts[:, axis] = cut
    pts[:, others[0]], pts[:, others[1]] = U.ravel(), V.ravel()
    E = np.linalg.eigvalsh(family.many(pts))
    diff = np.abs(E - E[:, band : band + 1])
    diff[:, band] = np.inf
    return float(diff.min())


def stone_bisection(family: HamiltonianFamily, lower, upper, band: int = 0,
                    stop_diameter: float = 1e-4, n_loops: int = 33, tol: float = 1e-4,
                    max_depth: int = 200) -> BisectionReport:
    """Localize a degeneracy by repeatedly splitting a box with a phase-rotating boundary.

    The cut axis cycles x, y, z. Candidate cut positions (``CUT_FRACTIONS`` of
    the edge, midpoint first) are ranked by the smallest gap sampled on the
    cut face, which keeps new faces away from the degeneracy; a cut is
    accepted when the windings of the two halves add up to the parent's.
    When both halves rotate, the first is kept and the second is recorded in
    ``candidates``.
    """
    lo, hi = as_point(lower).copy(), as_point(upper).copy()
    if len(lo) != 3 or family.n_params != 3:
        raise ValueError("Stone bisection works on 3-parameter families")

    def winding(a, b):
        return surface_winding(family, SurfaceLoopFamily.box(a, b, n_loops), band, tol).winding

    l_parent = winding(lo, hi)
    if l_parent == 0:
        raise BisectionError("initial box boundary is phase-preserving (winding 0)")
    report = BisectionReport((lo + hi) / 2, float(np.max(hi - lo)), 0, l_parent, lo, hi)
    depth = 0
    while float(np.max(hi - lo)) >= stop_diameter:
        if depth >= max_depth:
            raise BisectionError(f"no convergence after {max_depth} bisections")
        axis = depth % 3
        cuts = [lo[axis] + f * (hi[axis] - lo[axis]) for f in CUT_FRACTIONS]
        # Stable sort keeps the midpoint first among equally good cuts.
        gaps = [_face_min_gap(family, lo, hi, axis, c, band) for c in cuts]
        order = sorted(range(len(cuts)), key=lambda i: -gaps[i])
        for i in order:
            cut = cuts[i]
            hi_a, lo_b = hi.copy(), lo.copy()
            hi_a[axis] = lo_b[axis] = cut
            try:
                l_a, l_b = winding(lo, hi_a), winding(lo_b, hi)
            except (DegeneracyError, UnwrapError, ConvergenceError) as exc:
                log.info("depth %d: cut at %.6g failed (%s)", depth, cut, exc)
                continue
            if l_a + l_b == l_parent:
                break
            log.info("depth %d: windings %d + %d != %d at cut %.6g", depth, l_a, l_b, l_parent, cut)
        else:
            raise BisectionError(f"depth {depth}: no consistent cut along axis {axis}")
        halves = [(lo, hi_a, l_a), (lo_b, hi, l_b)]
        rotating = [h for h in halves if h[2] != 0]
        if not rotating:
            raise BisectionError(f"depth {depth}: both halves phase-preserving")
        if len(rotating) == 2:
            report.candidates.append((rotating[1][0].copy(), rotating[1][1].copy(), rotating[1][2]))
        kept = 0 if rotating[0] is halves[0] else 1
        lo, hi, l_parent = rotating[0][0].copy(), rotating[0][1].copy(), rotating[0][2]
        depth += 1
        report.log.append({"depth": depth, "axis": axis, "cut": float(cut), "windings": (l_a, l_b),
                           "kept": kept, "diameter": float(np.max(hi - lo))})
    report.located_point = (lo + hi) / 2
    report.box_diameter = float(np.max(hi - lo))
    report.depth = depth
    report.lower, report.upper = lo, hi
    return report


# ---------------------------------------------------------------------------
# XY scaling experiments


def intensive_phase(lam: float, gamma: float, M: int, exponent: float = 1.0) -> float:
    """Raw total phase divided by M**exponent."""
    return total_berry_phase(XYPoint(lam, gamma), ModeGrid(M)) / M**exponent


@dataclass
class ScalingSeries:
    """(M, gamma) table of XY ground-state phases at fixed field.

    Each row holds M, gamma, the field actually used (after dithering), the
    raw total phase, the intensive phase, the equatorial mode k0 and its phase
    (None when the field is outside (-1, 1)) and the triviality defect
    max_k min(phi_k, 2 pi - phi_k).
    """

    lam: float
    M_values: list
    gamma_values: list
    exponent: float
    rows: list
    dithers: list

    def row(self, M: int, gamma: float) -> dict:
        for r in self.rows:
            if r["M"] == M and r["gamma"] == gamma:
                return r
        raise KeyError((M, gamma))

    @property
    def has_equatorial(self) -> bool:
        return self.rows[0]["phase_k0"] is not None

    def _smallest_gamma(self):
        return min(self.gamma_values)

    def fixed_size_limit(self, M: int) -> float:
        """phi_k0 at the smallest gamma for fixed M (tends to 0 or 2 pi)."""
        return self.row(M, self._smallest_gamma())["phase_k0"]

    def thermodynamic_value(self, gamma: float) -> tuple[float, bool]:
        """phi_k0 at the largest M and whether it has settled across the last two sizes."""
        Ms = sorted(self.M_values)
        last = self.row(Ms[-1], gamma)["phase_k0"]
        if len(Ms) < 2:
            return last, False
        prev = self.row(Ms[-2], gamma)["phase_k0"]
        return last, abs(last - prev) < 0.05

    def size_first_limit(self) -> float | None:
        """phi_k0 for M -> infinity then gamma -> 0: value at the smallest gamma still settled in M."""
        settled = [g for g in sorted(self.gamma_values) if self.thermodynamic_value(g)[1]]
        return self.thermodynamic_value(settled[0])[0] if settled else None

    def gamma_first_limit(self) -> float:
        """phi_k0 for gamma -> 0 at the largest fixed M."""
        return self.fixed_size_limit(max(self.M_values))


def _strictly_monotone(values) -> bool:
    d = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(d > 0) or np.all(d < 0))


def xy_order_of_limits(lam: float, gamma_schedule, M_schedule, exponent: float = 1.0,
                       dither: bool = True) -> ScalingSeries:
    gammas = [float(g) for g in gamma_schedule]
    Ms = [int(m) for m in M_schedule]
    if not (_strictly_monotone(gammas) and _strictly_monotone(Ms)):
        raise ValueError("gamma and M schedules must be strictly monotone")
    rows, dithers = [], []
    for M in Ms:
        grid = ModeGrid(M)
        k0 = equatorial_mode(lam, grid)
        for g in gammas:
            lam_used, steps = dither_field(lam, g, grid) if dither else (lam, 0)
            if steps:
                dithers.append({"M": M, "gamma": g, "lam": lam, "lam_used": lam_used, "ulps": steps})
            sp = dispersion(XYPoint(lam_used, g), grid)
            if not sp.all_defined:
                total_berry_phase(XYPoint(lam_used, g), grid)  # raises UndefinedAngleError
            total = math.fsum(sp.phi)
            rows.append({
                "M": M, "gamma": g, "lam_used": lam_used,
                "phase_total": total,
                "phase_intensive": total / M**exponent,
                "k0": k0,
                "phase_k0": None if k0 is None else float(sp.phi[k0 - 1]),
                "triviality_defect": float(np.max(sp.triviality_defect())),
            })
    return ScalingSeries(lam, Ms, gammas, exponent, rows, dithers)
