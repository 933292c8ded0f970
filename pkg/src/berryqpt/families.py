"""Built-in Hamiltonian families and the matrix-expression file format.

Identifiers accepted by :func:`make_family`:

``two-level-real``
    H(x, z) = x sx + z sz, a real two-level family with a degeneracy at the origin.
``spin-half``
    H(B) = (B - B0) . sigma in three parameters, degenerate at B0 (``center``).
``xy-qubit`` / ``xy-qubit(k)``
    The two-level block of XY mode k (parameters lam, gamma, phi) whose ground
    state is cos(theta_k/2)|0> + i e^{2i phi} sin(theta_k/2)|1>.
``expr``
    Matrix entries read from a text file (see :func:`load_expression_file`).

Expression file grammar::

    # comment lines start with '#'; blank lines are ignored
    params: x, z                 <- first content line, comma-separated names
    z ; x                        <- then d rows of d ';'-separated entries
    x ; -z

Entries are arithmetic expressions in the parameters (sympy syntax, ``I``
for the imaginary unit, functions such as ``sin``, ``exp``, ``sqrt``).
Partial derivatives are taken symbolically.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np

from .numerics import HamiltonianFamily, as_point
from .xy import ModeGrid

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SX, SY, SZ])


def two_level_real() -> HamiltonianFamily:
    def matrix(p):
        return p[0] * SX + p[1] * SZ

    def batch(P):
        return P[:, 0, None, None] * SX + P[:, 1, None, None] * SZ

    def derivative(p, mu):
        return (SX, SZ)[mu].copy()

    return HamiltonianFamily(2, 2, matrix, derivative, batch, name="two-level-real")


def spin_half(center=(0.0, 0.0, 0.0)) -> HamiltonianFamily:
    c = as_point(center)
    if len(c) != 3:
        raise ValueError("spin-half center must have 3 components")

    def matrix(p):
        return np.tensordot(p - c, PAULI, axes=1)

    def batch(P):
        return np.tensordot(P - c, PAULI, axes=1)

    def derivative(p, mu):
        return PAULI[mu].copy()

    return HamiltonianFamily(2, 3, matrix, derivative, batch, name="spin-half")


def xy_qubit(k: int, modes: int) -> HamiltonianFamily:
    """Two-level block of XY mode ``k`` in a chain with ``modes`` positive modes.

    H_k(lam, gamma, phi) = -eps_k sz + gamma sin x_k (sin 2phi sx - cos 2phi sy),
    gap 2 Lambda_k.
    """
    grid = ModeGrid(modes)
    if not 1 <= k <= grid.M:
        raise ValueError(f"mode index {k} outside 1..{grid.M}")
    x = float(grid.x[k - 1])
    c, s = math.cos(x), math.sin(x)

    def batch(P):
        lam, gamma, phi = P[:, 0], P[:, 1], P[:, 2]
        eps = (c - lam)[:, None, None]
        t = (gamma * s)[:, None, None]
        return -eps * SZ + t * (np.sin(2 * phi)[:, None, None] * SX - np.cos(2 * phi)[:, None, None] * SY)

    def matrix(p):
        return batch(p[None, :])[0]

    def derivative(p, mu):
        lam, gamma, phi = p
        if mu == 0:
            return SZ.copy()
        if mu == 1:
            return s * (math.sin(2 * phi) * SX - math.cos(2 * phi) * SY)
        return 2 * gamma * s * (math.cos(2 * phi) * SX + math.sin(2 * phi) * SY)

    return HamiltonianFamily(2, 3, matrix, derivative, batch, name=f"xy-qubit({k})")


def random_family(rng: np.random.Generator, dim: int = 4, n_params: int = 2,
                  quadratic: float = 0.3) -> HamiltonianFamily:
    """H(p) = A0 + sum_mu p_mu A_mu + quadratic * sum_{mu<=nu} p_mu p_nu B_{mu nu}, GUE-like terms."""

    def herm():
        X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        return (X + X.conj().T) / 2

    A0 = herm()
    A = np.stack([herm() for _ in range(n_params)])
    B = np.stack([np.stack([herm() for _ in range(n_params)]) for _ in range(n_params)])
    B = quadratic * (B + np.swapaxes(B, 0, 1)) / 2  # symmetric in (mu, nu)

    def matrix(p):
        return A0 + np.tensordot(p, A, axes=1) + np.einsum("m,n,mnij->ij", p, p, B) / 2

    def derivative(p, mu):
        return A[mu] + np.tensordot(p, B[mu], axes=1)

    return HamiltonianFamily(dim, n_params, matrix, derivative, name="random")


def load_expression_file(path) -> HamiltonianFamily:
    return parse_expression_text(Path(path).read_text(encoding="utf-8"), name=f"expr:{path}")


def parse_expression_text(text: str, name: str = "expr") -> HamiltonianFamily:
    import sympy

    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0][1].startswith("params:"):
        raise ValueError("expression file must start with a 'params:' line")
    names = [n.strip() for n in lines[0][1][len("params:"):].split(",") if n.strip()]
    if not names or any(not re.fullmatch(r"[A-Za-z_]\w*", n) for n in names):
        raise ValueError(f"invalid parameter list {names!r}")
    symbols = sympy.symbols(names)
    local = {n: s for n, s in zip(names, symbols)}
    rows = []
    for lineno, ln in lines[1:]:
        try:
            rows.append([sympy.sympify(e.strip(), locals=local) for e in ln.split(";")])
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ValueError(f"line {lineno}: cannot parse entry ({exc})") from exc
    d = len(rows)
    if d == 0 or any(len(r) != d for r in rows):
        raise ValueError(f"expected a square matrix of entries, got row lengths {[len(r) for r in rows]}")
    M = sympy.Matrix(rows)
    free = M.free_symbols - set(symbols)
    if free:
        raise ValueError(f"unknown symbols in entries: {sorted(map(str, free))}")
    f = sympy.lambdify(symbols, M, "numpy")
    dfs = [sympy.lambdify(symbols, M.diff(s), "numpy") for s in symbols]

    def matrix(p):
        return np.array(f(*p), dtype=complex).reshape(d, d)

    def derivative(p, mu):
        return np.array(dfs[mu](*p), dtype=complex).reshape(d, d)

    return HamiltonianFamily(d, len(names), matrix, derivative, name=name)


_XY_QUBIT = re.compile(r"xy-qubit\((\d+)\)")


def make_family(name: str, **params) -> HamiltonianFamily:
    """Build a family from its identifier and parameters (see module docstring)."""
    m = _XY_QUBIT.fullmatch(name)
    if m:
        return xy_qubit(int(m.group(1)), int(params.get("modes", 1)))
    if name == "two-level-real":
        return two_level_real()
    if name == "spin-half":
        return spin_half(params.get("center", (0.0, 0.0, 0.0)))
    if name == "xy-qubit":
        return xy_qubit(int(params.get("k", 1)), int(params.get("modes", 1)))
    if name == "expr":
        if "path" not in params:
            raise ValueError("family 'expr' needs a 'path' parameter")
        return load_expression_file(params["path"])
    raise ValueError(f"unknown family {name!r}")


FAMILY_NAMES = ("two-level-real", "spin-half", "xy-qubit", "expr")
