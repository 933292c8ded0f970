import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from berryqpt.detector import (
    AdiabaticityWarning,
    Classification,
    LoopSequence,
    SurfaceKind,
    SurfaceLoopFamily,
    area_scaling_slope,
    classify_sequence,
    intensive_phase,
    phase_sequence,
    stone_bisection,
    surface_winding,
    xy_order_of_limits,
    xy_phase_sequence,
)
from berryqpt.errors import BisectionError, TooFewPointsError, UnwrapError
from berryqpt.families import SX, SZ, spin_half, two_level_real
from berryqpt.numerics import HamiltonianFamily, LoopPath, gap_at, wilson_loop_phase


def two_level_line():
    """x sx + z sz with an idle third parameter: the degeneracy is the y axis."""
    return HamiltonianFamily(2, 3, lambda p: p[0] * SX + p[2] * SZ, name="two-level-line")


# --- shrinking sequences ------------------------------------------------------

def test_circles_around_monopole_give_pi():
    seq = LoopSequence.geometric([0, 0, 0], 10, axes=(0, 2))
    phases = phase_sequence(spin_half(), seq)
    # Great circles enclose half the sphere: flux 2 pi * 1/2.
    assert all(abs(abs(p.principal) - math.pi) < 1e-8 for p in phases)
    verdict = classify_sequence(phases)
    assert verdict.classification is Classification.NON_CONTRACTIBLE
    assert abs(verdict.fitted_limit) == pytest.approx(math.pi, abs=1e-8)


def test_circles_around_regular_point_scale_with_area():
    seq = LoopSequence.geometric([0.4, -0.3, 0.8], 8, axes=(0, 1), first=0.2)
    phases = phase_sequence(spin_half(), seq, tol=1e-10)
    verdict = classify_sequence(phases)
    assert verdict.classification is Classification.CONTRACTIBLE
    assert area_scaling_slope(seq.radii, phases) == pytest.approx(2.0, abs=0.05)


def test_two_level_real_plane_circles():
    seq = LoopSequence.geometric([0, 0], 6)
    phases = phase_sequence(two_level_real(), seq)
    assert [p.principal for p in phases] == pytest.approx([math.pi] * 6, abs=1e-12)


def test_xy_sequence_at_finite_size_is_contractible():
    gammas = 2.0 ** -np.arange(30)
    phases = xy_phase_sequence(0.3, gammas, 101)
    tail = [abs(p.principal) for p in phases[-10:]]
    assert max(tail) < 1e-6
    assert classify_sequence(phases).classification is Classification.CONTRACTIBLE


def test_loop_sequence_validation():
    with pytest.raises(ValueError):
        LoopSequence.circles([0, 0], [0.1, 0.2])
    with pytest.raises(ValueError):
        LoopSequence.circles([0, 0], [0.1, -0.1])
    seq = LoopSequence.geometric([1.0, 2.0], 5)
    for r in range(seq.r_max):
        pts = seq.loop(r).sample(32)
        assert np.max(np.linalg.norm(pts - seq.limit_point, axis=1)) <= seq.radii[r] * (1 + 1e-12)


def test_adiabaticity_warning():
    # H = (x sx + z sz) / r^(1/2): gapped on every loop, but dH blows up at the origin.
    def H(p):
        r = math.hypot(p[0], p[1])
        return (p[0] * SX + p[1] * SZ) / math.sqrt(r)

    fam = HamiltonianFamily(2, 2, H, fd_step=1e-9)
    seq = LoopSequence.geometric([0, 0], 10, first=0.5)
    with pytest.warns(AdiabaticityWarning):
        phase_sequence(fam, seq)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AdiabaticityWarning)
        phase_sequence(spin_half(), LoopSequence.geometric([0, 0, 0], 6))


# --- classification -----------------------------------------------------------

def test_classify_examples():
    assert classify_sequence([math.pi - 1e-9] * 6).classification is Classification.NON_CONTRACTIBLE
    # -pi and pi are the same phase; the circular mean must not average them to zero.
    mixed = [math.pi, -math.pi + 1e-12, math.pi, -math.pi + 1e-12]
    assert classify_sequence(mixed).classification is Classification.NON_CONTRACTIBLE
    radii = 0.5 ** np.arange(10)
    assert classify_sequence(0.7 * radii**2).classification is Classification.CONTRACTIBLE
    alternating = [(-1) ** i * math.pi / 2 for i in range(8)]
    assert classify_sequence(alternating).classification is Classification.INCONCLUSIVE
    drifting = [0.5, 0.8, 1.1, 1.4, 1.7, 2.0]
    assert classify_sequence(drifting).classification is Classification.INCONCLUSIVE


def test_classify_too_few():
    with pytest.raises(TooFewPointsError):
        classify_sequence([1.0, 2.0, 3.0])


@given(st.floats(0.2, 3.0), st.floats(-1e-3, 1e-3))
def test_classify_constant_tail_is_non_contractible(limit, jitter):
    vals = [0.0, 1.0] + [limit + jitter * (i % 2) for i in range(6)]
    verdict = classify_sequence(vals)
    assert verdict.classification is Classification.NON_CONTRACTIBLE
    assert verdict.fitted_limit == pytest.approx(limit, abs=2e-3)


# --- surfaces -----------------------------------------------------------------

def test_sphere_winding_around_monopole():
    rep = surface_winding(spin_half(), SurfaceLoopFamily.sphere([0, 0, 0], 1.0))
    assert abs(rep.winding) == 1 and rep.classification is SurfaceKind.ROTATING
    assert rep.phases[0] == 0.0
    assert rep.phases[-1] == pytest.approx(2 * math.pi * rep.winding, abs=0.05)
    # The excited band sees the opposite monopole.
    assert surface_winding(spin_half(), SurfaceLoopFamily.sphere([0, 0, 0], 1.0), band=1).winding == -rep.winding


def test_sphere_not_enclosing():
    rep = surface_winding(spin_half([3, 0, 0]), SurfaceLoopFamily.sphere([0, 0, 0], 1.0))
    assert rep.winding == 0 and rep.classification is SurfaceKind.PRESERVING


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_box_winding(axis):
    box = SurfaceLoopFamily.box([-1, -1, -1], [1, 1, 1], axis=axis)
    assert abs(surface_winding(spin_half(), box).winding) == 1
    off = SurfaceLoopFamily.box([0.5, -1, -1], [1.5, 1, 1], axis=axis)
    assert surface_winding(spin_half(), off).winding == 0


def test_surface_end_loops_are_points():
    for surf in (SurfaceLoopFamily.sphere([0.1, 0, 0], 0.7), SurfaceLoopFamily.box([-1, 0, 0], [1, 2, 3])):
        for s in (0.0, 1.0):
            pts = surf.loop_at(s).sample(16)
            assert np.ptp(pts, axis=0).max() < 1e-12
        assert surf.adjacency > 0


def test_winding_invariant_under_refinement():
    for n in (9, 17, 33, 65):
        assert surface_winding(spin_half([0.2, -0.1, 0.3]), SurfaceLoopFamily.sphere([0, 0, 0], 1.0, n_loops=n)).winding == -1


@pytest.mark.parametrize("cut", [-0.5, 0.3, 0.77])
def test_winding_additive_across_cut(cut):
    f = spin_half([0.1, 0.2, -0.3])
    lo, hi = np.array([-1.0, -1, -1]), np.array([1.0, 1, 1])
    whole = surface_winding(f, SurfaceLoopFamily.box(lo, hi)).winding
    a_hi, b_lo = hi.copy(), lo.copy()
    a_hi[0] = b_lo[0] = cut
    a = surface_winding(f, SurfaceLoopFamily.box(lo, a_hi)).winding
    b = surface_winding(f, SurfaceLoopFamily.box(b_lo, hi)).winding
    assert a + b == whole


def test_unwrap_error_when_too_coarse():
    with pytest.raises(UnwrapError):
        surface_winding(spin_half(), SurfaceLoopFamily.sphere([0, 0, 0], 1.0, n_loops=3), max_level=0)


def test_torus_around_codimension_two_line():
    # Every loop around the degeneracy line of a real family carries the sign
    # flip pi, so the tracked phase never moves and the surface does not wind.
    def loop_at(s):
        a = 2 * math.pi * s
        return LoopPath(lambda t: np.stack([
            0.5 * np.cos(2 * np.pi * t), np.full_like(t, math.sin(a)), 0.5 * np.sin(2 * np.pi * t)
        ], axis=-1), 3)

    fam = two_level_line()
    torus = SurfaceLoopFamily(loop_at, n_loops=17)
    rep = surface_winding(fam, torus)
    assert rep.winding == 0

    for s in torus.sweep:
        assert wilson_loop_phase(fam, loop_at(s)).principal == pytest.approx(math.pi, abs=1e-12)


# --- bisection ------------------------------------------------------------------

def test_bisection_finds_origin():
    rep = stone_bisection(spin_half(), [-1, -1, -1], [1, 1, 1], stop_diameter=1e-4)
    assert np.linalg.norm(rep.located_point) < 1e-4
    assert rep.box_diameter < 1e-4 and abs(rep.initial_winding) == 1
    # Off-centre cuts (the midpoint face contains the origin) shrink slower than halving.
    assert rep.depth == len(rep.log) and 40 <= rep.depth <= 80
    # The retained boxes always rotate, and the gap shrinks below anything on the initial boundary.
    assert all(e["windings"][e["kept"]] != 0 for e in rep.log)
    boundary = [[x, y, z] for x in (-1, 0, 1) for y in (-1, 0, 1) for z in (-1, 1)]
    assert gap_at(spin_half(), rep.located_point, 0) < min(gap_at(spin_half(), p, 0) for p in boundary)


def test_bisection_translation_covariant():
    B0 = np.array([0.31, -0.47, 0.12])
    rep = stone_bisection(spin_half(B0), [-1, -1, -1], [1, 1, 1], stop_diameter=1e-4)
    assert np.linalg.norm(rep.located_point - B0) < 1e-4


def test_bisection_rejects_empty_box():
    with pytest.raises(BisectionError):
        stone_bisection(spin_half(), [0.5, 0.5, 0.5], [1, 1, 1])
    with pytest.raises(ValueError):
        stone_bisection(two_level_real(), [-1, -1], [1, 1])


# --- XY scaling -------------------------------------------------------------------

def test_order_of_limits_do_not_commute():
    series = xy_order_of_limits(0.3, [0.05, 1e-3, 1e-8], [101, 1001, 5000])
    k0_phase = series.row(5000, 0.05)["phase_k0"]
    assert abs(k0_phase - math.pi) < 0.05
    fixed = series.fixed_size_limit(101)
    assert min(fixed, 2 * math.pi - fixed) < 1e-6
    assert series.row(101, 1e-8)["triviality_defect"] < 1e-6
    assert series.has_equatorial


def test_order_of_limits_without_equatorial_mode():
    series = xy_order_of_limits(-2.0, [0.1, 1e-4, 1e-8], [11, 101])
    assert not series.has_equatorial
    assert all(r["phase_k0"] is None for r in series.rows)
    assert series.row(101, 1e-8)["phase_total"] < 1e-12


def test_order_of_limits_validation():
    with pytest.raises(ValueError):
        xy_order_of_limits(0.3, [0.1, 0.1], [11])


@pytest.mark.parametrize("lam,expected", [(-2.0, 0.0), (2.0, 2 * math.pi)])
def test_intensive_phase_outside_band(lam, expected):
    assert intensive_phase(lam, 1e-8, 101) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("lam", [0.0, 0.3, -0.6])
def test_intensive_phase_mode_count(lam):
    M = 4001
    N = 2 * M + 1
    # Modes with cos x_k < lam sit at 2 pi as gamma -> 0, the rest at 0.
    count = sum(1 for k in range(1, M + 1) if math.cos(2 * math.pi * k / N) < lam)
    value = intensive_phase(lam, 1e-6, M)
    assert value == pytest.approx(2 * math.pi * count / M, abs=1e-3)
    assert value == pytest.approx(2 * (math.pi - math.acos(lam)), abs=2e-3)
