"""Berry phases, curvature and gap diagnostics for dense Hamiltonian families.

Conventions
-----------
Berry phase of band j around a closed loop (the Wilson loop)::

    gamma = sum_s arg <v_j(s) | v_j(s+1)>        (closure s = K -> 0)

which is the discretization of -i oint <j|d j>. With this sign the single
mode of the XY ground state traced over phi: 0 -> pi gives
+pi (1 - cos theta_k), and the equatorial mode gives +pi.

Curvature: ``F[mu, nu]`` is the coefficient in F = sum_{mu,nu} F_{mu nu}
dlam^mu ^ dlam^nu (sum over *all* ordered pairs), i.e.

    F_{mu nu} = sum_{m != j} Im(<j|d_mu H|m><m|d_nu H|j>) / (E_m - E_j)^2,

so a small counter-clockwise (mu, nu) plaquette of area A picks up the phase
2 F_{mu nu} A. In this normalization |F_{mu nu}| is bounded by
||d_mu H|j>|| ||d_nu H|j>|| / gap^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, DegeneracyError, NonHermitianError

# Band j counts as isolated when its gap exceeds this fraction of max|E|.
DEGENERACY_REL = 1e-10
# Gaps below this are degenerate even when the whole spectrum is tiny.
DEGENERACY_ABS = 1e-13
MAX_DIM = 512
HERMITIAN_ATOL = 1e-12
MIN_SEGMENTS = 64
MAX_SEGMENTS = 2**20
# Largest number of matrices diagonalized in one batched call.
_CHUNK = 8192


def wrap_phase(x):
    """Map phases into (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, 2 * math.pi) - math.pi
    y = np.where(y <= -math.pi, math.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def as_point(point) -> np.ndarray:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if p.ndim != 1 or not np.all(np.isfinite(p)):
        raise ValueError(f"parameter point must be a finite 1-d vector, got {point!r}")
    return p


def check_hermitian(H: np.ndarray, atol: float = HERMITIAN_ATOL) -> None:
    H = np.asarray(H)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise NonHermitianError(f"expected square matrices, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    dev = float(np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2))))) if H.size else 0.0
    if dev > atol * scale:
        raise NonHermitianError(f"matrix is not Hermitian (max |H - H^dagger| = {dev:.3e})")


def fix_gauge(vectors: np.ndarray, significant: float = 1e-8) -> np.ndarray:
    """Rotate each eigenvector (column) so its first significant component is real positive.

    Works on a single (d, n) array or a stack (..., d, n).
    """
    v = np.asarray(vectors, dtype=complex)
    mag = np.abs(v)
    first = np.argmax(mag > significant * mag.max(axis=-2, keepdims=True), axis=-2)
    pivot = np.take_along_axis(v, first[..., None, :], axis=-2)
    phase = np.conj(pivot) / np.abs(pivot)
    return v * phase


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvectors (columns of ``vectors``)."""

    values: np.ndarray
    vectors: np.ndarray
    residual: float

    @property
    def dim(self) -> int:
        return len(self.values)

    def vector(self, m: int) -> np.ndarray:
        return self.vectors[:, m]

    def gap(self, band: int) -> float:
        others = np.delete(self.values, band)
        return float(np.min(np.abs(others - self.values[band]))) if len(others) else math.inf


def eigensystem(H, tol: float = 1e-10, max_dim: int = MAX_DIM) -> EigenSystem:
    """Dense Hermitian eigendecomposition with a fixed eigenvector gauge."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise NonHermitianError(f"expected a square matrix, got shape {H.shape}")
    if H.shape[0] > max_dim:
        raise ValueError(f"matrix dimension {H.shape[0]} exceeds the configured cap {max_dim}")
    check_hermitian(H)
    try:
        E, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigendecomposition did not converge: {exc}") from exc
    V = fix_gauge(V)
    residual = float(np.max(np.linalg.norm(H @ V - V * E, axis=0))) if len(E) else 0.0
    if residual > tol * max(1.0, float(np.max(np.abs(E)))):
        raise ConvergenceError(f"eigen-residual {residual:.3e} above tolerance {tol:.1e}")
    return EigenSystem(E, V, residual)


def degeneracy_tolerance(values: np.ndarray, rel: float = DEGENERACY_REL) -> np.ndarray:
    return np.maximum(rel * np.max(np.abs(values), axis=-1), DEGENERACY_ABS)


def band_gaps(values: np.ndarray, band: int) -> np.ndarray:
    """inf_{m != band} |E_band - E_m| along the last axis."""
    diff = np.abs(values - values[..., band : band + 1])
    diff[..., band] = np.inf
    return diff.min(axis=-1)


@dataclass(frozen=True)
class HamiltonianFamily:
    """A smooth map from parameter points to d x d Hermitian matrices.

    ``matrix(point)`` returns one matrix. Optional ``batch(points)`` maps an
    (n, q) array to an (n, d, d) stack; optional ``derivative(point, mu)``
    returns the analytic partial derivative along axis ``mu``. All callables
    must be stateless, since scans evaluate them from several workers.
    """

    dim: int
    n_params: int
    matrix: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray, int], np.ndarray] | None = None
    batch: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"
    fd_step: float = 1e-5

    def __call__(self, point) -> np.ndarray:
        return np.asarray(self.matrix(as_point(point)), dtype=complex)

    def many(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.n_params)
        if self.batch is not None:
            return np.asarray(self.batch(points), dtype=complex)
        out = np.empty((len(points), self.dim, self.dim), dtype=complex)
        for i, p in enumerate(points):
            out[i] = self.matrix(p)
        return out

    def partial(self, point, mu: int, h: float | None = None) -> np.ndarray:
        point = as_point(point)
        if self.derivative is not None and h is None:
            return np.asarray(self.derivative(point, mu), dtype=complex)
        h = self.fd_step if h is None else h
        step = np.zeros_like(point)
        step[mu] = h
        return (self(point + step) - self(point - step)) / (2 * h)


def band_vectors(family: HamiltonianFamily, points, band: int, rel: float = DEGENERACY_REL):
    """Gauge-fixed eigenvectors of ``band`` at each point, shape (n, d).

    Raises DegeneracyError at the first point where the band is not isolated.
    """
    points = np.asarray(points, dtype=float).reshape(-1, family.n_params)
    if not 0 <= band < family.dim:
        raise IndexError(f"band {band} outside 0..{family.dim - 1}")
    if family.dim > MAX_DIM:
        raise ValueError(f"family dimension {family.dim} exceeds the configured cap {MAX_DIM}")
    out = np.empty((len(points), family.dim), dtype=complex)
    for start in range(0, len(points), _CHUNK):
        chunk = points[start : start + _CHUNK]
        H = family.many(chunk)
        check_hermitian(H)
        E, V = np.linalg.eigh(H)
        gaps = band_gaps(E, band) if family.dim > 1 else np.full(len(E), np.inf)
        bad = np.nonzero(~(gaps > degeneracy_tolerance(E, rel)))[0]
        if len(bad):
            i = int(bad[0])
            raise DegeneracyError(
                f"band {band} is degenerate (gap {gaps[i]:.3e}) at point {chunk[i].tolist()}",
                where=chunk[i].tolist(),
                index=start + i,
            )
        out[start : start + len(chunk)] = fix_gauge(V[..., band : band + 1])[..., 0]
    return out


def closed_loop_phase(vectors: np.ndarray) -> tuple[float, float]:
    """Discrete Berry phase of an ordered, implicitly closed list of vectors.

    Returns (principal in (-pi, pi], unwrapped sum of per-segment phases).
    The unwrapped value depends on the gauge of ``vectors``; it is the
    continuous integral when that gauge is smooth along the loop.
    """
    v = np.asarray(vectors)
    overlaps = np.einsum("sd,sd->s", v.conj(), np.roll(v, -1, axis=0))
    unwrapped = float(np.sum(np.angle(overlaps)))
    return wrap_phase(unwrapped), unwrapped


@dataclass(frozen=True)
class LoopPath:
    """A closed curve t in [0, 1) -> parameter point; closure at t = 1 is implicit.

    ``curve`` takes an array of t values and returns an (n, q) array.
    """

    curve: Callable[[np.ndarray], np.ndarray]
    dim: int
    label: str = ""

    def sample(self, n: int) -> np.ndarray:
        t = np.arange(n) / n
        pts = np.asarray(self.curve(t), dtype=float).reshape(n, self.dim)
        return pts

    def at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.asarray(self.curve(t), dtype=float).reshape(len(t), self.dim)

    @classmethod
    def polygon(cls, points: Sequence[Sequence[float]], label: str = "polygon") -> "LoopPath":
        """Piecewise-linear closed loop through the vertices, parametrized by arc length."""
        verts = np.asarray(points, dtype=float)
        if verts.ndim != 2 or len(verts) < 3:
            raise ValueError("a loop needs at least 3 points of equal dimension")
        closed = np.vstack([verts, verts[:1]])
        seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        total = seg.sum()
        if total == 0:
            knots = np.linspace(0.0, 1.0, len(closed))
        else:
            knots = np.concatenate([[0.0], np.cumsum(seg) / total])

        def curve(t):
            t = np.mod(t, 1.0)
            return np.stack([np.interp(t, knots, closed[:, a]) for a in range(closed.shape[1])], axis=-1)

        return cls(curve, verts.shape[1], label)

    @classmethod
    def circle(cls, center, radius: float, axes=(0, 1), label: str = "circle") -> "LoopPath":
        """Counter-clockwise circle in the plane spanned by coordinate axes (mu, nu)."""
        c = as_point(center)
        mu, nu = axes

        def curve(t):
            pts = np.tile(c, (len(t), 1))
            pts[:, mu] += radius * np.cos(2 * np.pi * t)
            pts[:, nu] += radius * np.sin(2 * np.pi * t)
            return pts

        return cls(curve, len(c), label)

    @classmethod
    def planar_circle(cls, center, radius: float, u, v, label: str = "circle") -> "LoopPath":
        """Circle c + r (cos 2 pi t u + sin 2 pi t v) for orthonormal direction vectors u, v."""
        c, u, v = as_point(center), as_point(u), as_point(v)

        def curve(t):
            a = 2 * np.pi * t[:, None]
            return c + radius * (np.cos(a) * u + np.sin(a) * v)

        return cls(curve, len(c), label)


@dataclass(frozen=True)
class BerryPhaseResult:
    principal: float
    unwrapped: float
    segments_used: int
    refinement_error: float


def wilson_loop_phase(
    family: HamiltonianFamily,
    loop: LoopPath,
    band: int = 0,
    tol: float = 1e-9,
    min_segments: int = MIN_SEGMENTS,
    max_segments: int = MAX_SEGMENTS,
    rel: float = DEGENERACY_REL,
) -> BerryPhaseResult:
    """Berry phase of ``band`` around ``loop``, refined by doubling the segment count.

    Stops once consecutive refinements agree to ``tol`` (mod 2 pi); raises
    ConvergenceError if ``max_segments`` is reached first.
    """
    if loop.dim != family.n_params:
        raise ValueError(f"loop dimension {loop.dim} does not match family ({family.n_params})")
    K = min_segments
    vecs = band_vectors(family, loop.sample(K), band, rel)
    prev = closed_loop_phase(vecs)
    err = math.inf
    while K < max_segments:
        t_new = (2 * np.arange(K) + 1) / (2 * K)
        new = band_vectors(family, loop.at(t_new), band, rel)
        merged = np.empty((2 * K, family.dim), dtype=complex)
        merged[0::2], merged[1::2] = vecs, new
        vecs, K = merged, 2 * K
        cur = closed_loop_phase(vecs)
        err = abs(wrap_phase(cur[0] - prev[0]))
        if err < tol:
            return BerryPhaseResult(cur[0], cur[1], K, err)
        prev = cur
    raise ConvergenceError(
        f"Wilson loop not converged to {tol:.1e} with {K} segments (last change {err:.3e})"
    )


def loop_phase_from_points(family: HamiltonianFamily, points, band: int = 0) -> float:
    """Unrefined discrete Berry phase through exactly the given vertices."""
    return closed_loop_phase(band_vectors(family, points, band))[0]


@dataclass(frozen=True)
class CurvatureSample:
    point: tuple
    mu: int
    nu: int
    F_value: float
    gap: float
    bound: float
    # ||d_mu H|j>||, ||d_nu H|j>||: the numerator of the bound.
    dH_norms: tuple = (math.nan, math.nan)

    @property
    def flux_density(self) -> float:
        """Phase per unit area of a small (mu, nu) plaquette, 2 F_{mu nu}."""
        return 2 * self.F_value


def _isolated_eigensystem(family, point, band, rel=DEGENERACY_REL):
    es = eigensystem(family(point))
    gap = es.gap(band)
    if not gap > float(degeneracy_tolerance(es.values, rel)):
        raise DegeneracyError(f"band {band} is degenerate (gap {gap:.3e}) at {list(point)}", where=list(point))
    return es, gap


def curvature_sum_over_states(family, point, mu: int, nu: int, band: int = 0) -> CurvatureSample:
    point = as_point(point)
    es, gap = _isolated_eigensystem(family, point, band)
    vj = es.vector(band)
    dmu = family.partial(point, mu) @ vj
    dnu = family.partial(point, nu) @ vj
    a = es.vectors.conj().T @ dmu  # <m|d_mu H|j>
    b = es.vectors.conj().T @ dnu  # <m|d_nu H|j>
    dE = es.values - es.values[band]
    mask = np.arange(es.dim) != band
    F = float(np.sum(np.imag(np.conj(a[mask]) * b[mask]) / dE[mask] ** 2))
    n_mu, n_nu = float(np.linalg.norm(dmu)), float(np.linalg.norm(dnu))
    return CurvatureSample(tuple(point.tolist()), mu, nu, F, gap, n_mu * n_nu / gap**2, (n_mu, n_nu))


def curvature_bound(family, point, mu: int, nu: int, band: int = 0) -> float:
    """||d_mu H|j>|| ||d_nu H|j>|| / gap^2, which bounds |F_{mu nu}|."""
    point = as_point(point)
    es, gap = _isolated_eigensystem(family, point, band)
    vj = es.vector(band)
    n_mu = np.linalg.norm(family.partial(point, mu) @ vj)
    n_nu = np.linalg.norm(family.partial(point, nu) @ vj)
    return float(n_mu * n_nu / gap**2)


def _square_phase(family, point, mu, nu, band, h):
    offsets = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * (h / 2)
    corners = np.tile(point, (4, 1))
    corners[:, mu] += offsets[:, 0]
    corners[:, nu] += offsets[:, 1]
    return loop_phase_from_points(family, corners, band)


def curvature_plaquette(family, point, mu: int, nu: int, band: int = 0, h: float = 1e-3,
                        richardson: bool = True) -> float:
    """Finite-loop estimate of F_{mu nu}: phase of the centered h x h plaquette over 2 h^2.

    With ``richardson`` the h and h/2 estimates are combined to cancel the
    leading O(h^2) error.
    """
    point = as_point(point)
    if mu == nu:
        return 0.0
    coarse = _square_phase(family, point, mu, nu, band, h) / (2 * h * h)
    if not richardson:
        return coarse
    fine = _square_phase(family, point, mu, nu, band, h / 2) / (2 * (h / 2) ** 2)
    return (4 * fine - coarse) / 3


def gap_at(family, point, band: int = 0) -> float:
    E = np.linalg.eigvalsh(family(point))
    return float(band_gaps(E, band)) if len(E) > 1 else math.inf


def projector_derivative_norm(family, point, mu: int, band: int = 0, h: float = 1e-5) -> float:
    """Operator norm of the central difference of the band projector along axis mu."""
    point = as_point(point)
    step = np.zeros_like(point)
    step[mu] = h
    v = band_vectors(family, np.stack([point + step, point - step]), band)
    P = [np.outer(x, x.conj()) for x in v]
    return float(np.linalg.norm((P[0] - P[1]) / (2 * h), ord=2))


@dataclass(frozen=True)
class DegeneracyVector:
    multiplicities: tuple

    def __iter__(self):
        return iter(self.multiplicities)

    def __len__(self):
        return len(self.multiplicities)


def degeneracy_vector(eigs: EigenSystem, cluster_tol: float = 1e-10) -> DegeneracyVector:
    """Multiplicities of the distinct eigenvalues in ascending order.

    Consecutive eigenvalues closer than ``cluster_tol`` join one cluster.
    """
    E = np.sort(np.asarray(eigs.values if isinstance(eigs, EigenSystem) else eigs, dtype=float))
    if len(E) == 0:
        return DegeneracyVector(())
    breaks = np.nonzero(np.diff(E) >= cluster_tol)[0]
    edges = np.concatenate([[-1], breaks, [len(E) - 1]])
    return DegeneracyVector(tuple(int(n) for n in np.diff(edges)))


def sphere_plaquette_phases(family, center, radius: float, band: int = 0, n_theta: int = 64,
                            n_phi: int = 128, axes=(0, 1, 2)) -> np.ndarray:
    """Berry phases of the (theta, phi) mesh plaquettes on a sphere, outward orientation.

    Returns an (n_theta, n_phi) array of principal phases.
    """
    c = as_point(center)
    theta = np.linspace(0.0, np.pi, n_theta + 1)
    phi = np.arange(n_phi) * (2 * np.pi / n_phi)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    pts = np.tile(c, (T.size, 1))
    ax, ay, az = axes
    pts[:, ax] += radius * (np.sin(T) * np.cos(P)).ravel()
    pts[:, ay] += radius * (np.sin(T) * np.sin(P)).ravel()
    pts[:, az] += radius * np.cos(T).ravel()
    v = band_vectors(family, pts, band).reshape(n_theta + 1, n_phi, -1)

    def link(a, b):
        return np.einsum("...d,...d->...", a.conj(), b)

    vr = np.roll(v, -1, axis=1)
    # Corners in order (i, j) -> (i+1, j) -> (i+1, j+1) -> (i, j+1): d theta ^ d phi is outward.
    prod = (
        link(v[:-1], v[1:])
        * link(v[1:], vr[1:])
        * link(vr[1:], vr[:-1])
        * link(vr[:-1], v[:-1])
    )
    return np.angle(prod)


def sphere_flux(family, center, radius: float, band: int = 0, n_theta: int = 64, n_phi: int = 128,
                axes=(0, 1, 2)) -> float:
    """Total Berry flux through a sphere: the sum of its plaquette phases (2 pi x integer)."""
    return float(np.sum(sphere_plaquette_phases(family, center, radius, band, n_theta, n_phi, axes)))
