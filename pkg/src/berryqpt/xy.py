"""Closed-form engine for the rotated anisotropic XY chain in a transverse field.

The chain has sites -M..M (N = 2M + 1, always odd) and Hamiltonian

    H(lam, gamma, phi) = g(phi) H(lam, gamma) g(phi)^dagger,
    H(lam, gamma) = -sum_i [(1+gamma)/2 sx_i sx_{i+1} + (1-gamma)/2 sy_i sy_{i+1} + lam sz_i].

After fermionization the ground state is a product over modes k = 1..M of
two-level states

    cos(theta_k/2) |0>_k|0>_{-k} + i exp(2i phi) sin(theta_k/2) |1>_k|1>_{-k}

with x_k = 2 pi k / N, eps_k = cos x_k - lam,
Lambda_k = sqrt(eps_k^2 + gamma^2 sin^2 x_k) and cos theta_k = eps_k / Lambda_k.

Driving phi from 0 to pi takes every mode once around its Bloch-sphere
latitude, so the ground-state Berry phase is the sum of single-mode phases
pi (1 - cos theta_k). The loop convention phi: 0 -> pi is fixed everywhere in
this package.

Phases come in two representations: the raw sum in [0, 2 pi M] (extensive)
and its reduction mod 2 pi. Functions say which one they return.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoEquatorialModeError, UndefinedAngleError

TWO_PI = 2.0 * math.pi

# Tolerance for the exact-equality tests that define the critical regions.
REGION_TOL = 1e-12


@dataclass(frozen=True)
class XYPoint:
    """A point (lam, gamma, phi) of the XY parameter space.

    ``phi`` is reduced into [0, 2 pi) on construction; ``gamma`` must be >= 0.
    """

    lam: float
    gamma: float
    phi: float = 0.0

    def __post_init__(self):
        lam, gamma, phi = float(self.lam), float(self.gamma), float(self.phi)
        if not (math.isfinite(lam) and math.isfinite(gamma) and math.isfinite(phi)):
            raise ValueError(f"non-finite XY parameters {(lam, gamma, phi)}")
        if gamma < 0:
            raise ValueError(f"anisotropy gamma must be >= 0, got {gamma}")
        phi = math.fmod(phi, TWO_PI)
        if phi < 0:
            phi += TWO_PI
        if phi >= TWO_PI:  # fmod of a tiny negative number can round up
            phi = 0.0
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class ModeGrid:
    """Positive momenta x_k = 2 pi k / N, k = 1..M, for a chain of N = 2M + 1 sites."""

    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"number of modes M must be a positive integer, got {self.M}")
        object.__setattr__(self, "M", int(self.M))

    @property
    def N(self) -> int:
        return 2 * self.M + 1

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.M + 1)

    @property
    def x(self) -> np.ndarray:
        return TWO_PI * self.k / self.N


@dataclass(frozen=True)
class ModeSpectrum:
    """Per-mode quantities, index 0 holding mode k = 1.

    Entries of ``cos_theta`` and ``phi`` are NaN where ``Lambda`` is exactly
    zero; ``defined`` flags the usable modes.
    """

    point: XYPoint
    grid: ModeGrid
    eps: np.ndarray
    Lambda: np.ndarray
    cos_theta: np.ndarray
    phi: np.ndarray
    # 1 - cos theta and 1 + cos theta, each evaluated without cancellation.
    one_minus_cos: np.ndarray = field(repr=False)
    one_plus_cos: np.ndarray = field(repr=False)

    @property
    def defined(self) -> np.ndarray:
        return self.Lambda > 0

    @property
    def all_defined(self) -> bool:
        return bool(np.all(self.Lambda > 0))

    def triviality_defect(self) -> np.ndarray:
        """min(phi_k, 2 pi - phi_k) per mode, i.e. the distance of each phase from 0 mod 2 pi."""
        return math.pi * np.minimum(self.one_minus_cos, self.one_plus_cos)


def dispersion(point: XYPoint, grid: ModeGrid) -> ModeSpectrum:
    x = grid.x
    eps = np.cos(x) - point.lam
    transverse = point.gamma * np.sin(x)
    Lam = np.hypot(eps, transverse)
    t2 = transverse * transverse
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_theta = np.where(Lam > 0, eps / Lam, np.nan)
        # Pick the cancellation-free form on each side of eps = 0.
        sum_ = Lam + np.abs(eps)
        small = np.where(sum_ > 0, t2 / (Lam * sum_), np.nan)
        large = np.where(Lam > 0, (Lam + np.abs(eps)) / Lam, np.nan)
    one_minus_cos = np.where(eps > 0, small, large)
    one_plus_cos = np.where(eps > 0, large, small)
    # eps == 0 exactly: both equal 1 (equatorial).
    eq = (eps == 0) & (Lam > 0)
    one_minus_cos = np.where(eq, 1.0, one_minus_cos)
    one_plus_cos = np.where(eq, 1.0, one_plus_cos)
    phi = math.pi * one_minus_cos
    return ModeSpectrum(point, grid, eps, Lam, cos_theta, phi, one_minus_cos, one_plus_cos)


def _check_defined(spectrum: ModeSpectrum, k=None):
    bad = ~spectrum.defined if k is None else np.array([not spectrum.defined[k - 1]])
    if np.any(bad):
        ks = spectrum.grid.k[~spectrum.defined] if k is None else [k]
        raise UndefinedAngleError(
            f"mixing angle undefined: Lambda_k = 0 for k = {list(map(int, ks))} "
            f"at lam={spectrum.point.lam!r}, gamma={spectrum.point.gamma!r}"
        )


def mode_berry_phase(spectrum: ModeSpectrum, k: int) -> float:
    """Single-mode Berry phase pi (1 - cos theta_k) in [0, 2 pi], k is 1-based."""
    if not 1 <= k <= spectrum.grid.M:
        raise IndexError(f"mode index {k} outside 1..{spectrum.grid.M}")
    _check_defined(spectrum, k)
    return float(spectrum.phi[k - 1])


def total_berry_phase(point: XYPoint, grid: ModeGrid, mod_2pi: bool = False) -> float:
    """Ground-state Berry phase for the loop phi: 0 -> pi.

    Returns the raw sum over modes (in [0, 2 pi M]) or, with ``mod_2pi``, its
    reduction into [0, 2 pi).
    """
    spectrum = dispersion(point, grid)
    _check_defined(spectrum)
    total = math.fsum(spectrum.phi)
    return math.fmod(total, TWO_PI) if mod_2pi else total


@dataclass(frozen=True)
class QubitState:
    amplitude_0: complex
    amplitude_1: complex

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amplitude_0, self.amplitude_1], dtype=complex)

    @property
    def norm(self) -> float:
        return math.sqrt(abs(self.amplitude_0) ** 2 + abs(self.amplitude_1) ** 2)


def ground_state(point: XYPoint, grid: ModeGrid) -> list[QubitState]:
    """Per-mode two-level factors of the ground state, k = 1..M in order."""
    spectrum = dispersion(point, grid)
    _check_defined(spectrum)
    cos_half = np.sqrt(spectrum.one_plus_cos / 2)
    sin_half = np.sqrt(spectrum.one_minus_cos / 2)
    twist = 1j * np.exp(2j * point.phi)
    return [QubitState(complex(c), complex(twist * s)) for c, s in zip(cos_half, sin_half)]


def excitation_gap(point: XYPoint, grid: ModeGrid) -> float:
    """Lowest one-particle excitation energy min_k Lambda_k at finite N."""
    return float(np.min(dispersion(point, grid).Lambda))


def equatorial_mode(lam: float, grid: ModeGrid) -> int | None:
    """Mode k (1-based) with cos x_k closest to lam, or None if lam is outside (-1, 1)."""
    if not -1.0 < lam < 1.0:
        return None
    return int(np.argmin(np.abs(np.cos(grid.x) - lam))) + 1


def relative_phase_equatorial(point: XYPoint, grid: ModeGrid) -> float:
    """Minus the Berry phase of the equatorial mode.

    In the limit N -> infinity followed by gamma -> 0 this tends to -pi; at
    fixed N it tends to 0 or -2 pi instead.
    """
    k0 = equatorial_mode(point.lam, grid)
    if k0 is None:
        raise NoEquatorialModeError(f"lam = {point.lam} has no equatorial mode (needs -1 < lam < 1)")
    return -mode_berry_phase(dispersion(point, grid), k0)


def dither_field(lam: float, gamma: float, grid: ModeGrid, max_steps: int = 64) -> tuple[float, int]:
    """Nudge ``lam`` upward ulp by ulp until no mode is exactly gapless.

    Returns the (possibly unchanged) field and the number of ulp steps taken.
    Only gamma == 0 with cos x_k == lam can produce Lambda_k == 0.
    """
    steps = 0
    while steps <= max_steps:
        if dispersion(XYPoint(lam, gamma), grid).all_defined:
            return lam, steps
        lam = math.nextafter(lam, math.inf)
        steps += 1
    raise UndefinedAngleError(f"could not dither lam away from a gapless mode in {max_steps} steps")


class Region(str, enum.Enum):
    XX = "XX-critical"
    XY = "XY-critical"
    ISING = "Ising-line"
    NONCRITICAL = "non-critical"


def critical_regions(point: XYPoint, tol: float = REGION_TOL) -> frozenset[Region]:
    """All critical regions containing the point (they intersect, e.g. at lam = 1, gamma = 1)."""
    out = set()
    if abs(point.gamma) <= tol and -1.0 < point.lam < 1.0:
        out.add(Region.XX)
    if abs(abs(point.lam) - 1.0) <= tol:
        out.add(Region.XY)
    if abs(point.gamma - 1.0) <= tol:
        out.add(Region.ISING)
    return frozenset(out)


def classify_region(point: XYPoint, tol: float = REGION_TOL) -> Region:
    """Single label with precedence XX > XY > Ising > non-critical."""
    regions = critical_regions(point, tol)
    for r in (Region.XX, Region.XY, Region.ISING):
        if r in regions:
            return r
    return Region.NONCRITICAL
