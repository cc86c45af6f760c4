"""Dense complex polynomial arithmetic and small dense linear algebra.

Polynomials are stored in ascending coefficient order (index ``i`` holds the
coefficient of ``z**i``).  Matrices are plain 2-D ``complex128`` numpy arrays.
Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateLeading,
    DuplicateNodes,
    NoConvergence,
    ZeroDivisor,
)

EPS = np.finfo(float).eps

#: degree reported for the zero polynomial
ZERO_DEGREE = -1

NODE_TOL = 1e-12
LEADING_TOL = 1e-12
ROOT_TOL = 1e-14
ROOT_MAX_ITER = 1000
ROOT_ANGLE_OFFSET = 0.4
PIVOT_TOL = 1e-12


def as_cmatrix(m) -> np.ndarray:
    a = np.array(m, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


class Poly:
    """Immutable dense polynomial over the complex numbers."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[complex]):
        c = np.array(list(coeffs) if not isinstance(coeffs, np.ndarray) else coeffs,
                     dtype=complex).ravel()
        if c.size == 0:
            c = np.zeros(1, dtype=complex)
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        c.setflags(write=False)
        self.coeffs = c

    @classmethod
    def zero(cls) -> "Poly":
        return cls([0.0])

    @classmethod
    def from_roots(cls, roots: Sequence[complex]) -> "Poly":
        """Monic polynomial ``prod (z - r)``."""
        c = np.ones(1, dtype=complex)
        for r in roots:
            nxt = np.zeros(c.size + 1, dtype=complex)
            nxt[1:] += c
            nxt[:-1] -= r * c
            c = nxt
        return cls(c)

    def degree(self) -> int:
        nz = np.flatnonzero(np.abs(self.coeffs) > 0)
        return int(nz[-1]) if nz.size else ZERO_DEGREE

    def is_zero(self) -> bool:
        return self.degree() == ZERO_DEGREE

    def trimmed(self) -> "Poly":
        return Poly(self.coeffs[: max(self.degree(), 0) + 1])

    @property
    def leading(self) -> complex:
        return complex(self.coeffs[max(self.degree(), 0)])

    def monic(self) -> "Poly":
        if self.is_zero():
            raise ZeroDivisor("the zero polynomial has no monic form")
        t = self.trimmed()
        return Poly(t.coeffs / t.coeffs[-1])

    def __call__(self, z):
        return poly_eval(self, z)

    def __len__(self) -> int:
        return self.coeffs.size

    def _padded(self, other: "Poly") -> tuple[np.ndarray, np.ndarray]:
        n = max(len(self), len(other))
        a = np.zeros(n, dtype=complex)
        b = np.zeros(n, dtype=complex)
        a[: len(self)] = self.coeffs
        b[: len(other)] = other.coeffs
        return a, b

    def __add__(self, other: "Poly") -> "Poly":
        a, b = self._padded(other)
        return Poly(a + b)

    def __sub__(self, other: "Poly") -> "Poly":
        a, b = self._padded(other)
        return Poly(a - b)

    def __mul__(self, other):
        if isinstance(other, Poly):
            return Poly(np.convolve(self.coeffs, other.coeffs))
        return Poly(self.coeffs * complex(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Poly":
        return Poly(-self.coeffs)

    def compose(self, inner: "Poly") -> "Poly":
        """``self(inner(z))`` via Horner's rule on polynomials."""
        out = Poly([self.coeffs[-1]])
        for c in self.coeffs[-2::-1]:
            out = out * inner + Poly([c])
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return np.array_equal(self.trimmed().coeffs, other.trimmed().coeffs)

    def __hash__(self) -> int:
        return hash(self.trimmed().coeffs.tobytes())

    def __repr__(self) -> str:
        return f"Poly({[complex(c) for c in self.coeffs]!r})"


def poly_eval(p: Poly, z):
    """Horner evaluation; ``z`` may be a scalar or a numpy array."""
    c = p.coeffs
    z = np.asarray(z, dtype=complex)
    acc = np.full(z.shape, c[-1], dtype=complex)
    for a in c[-2::-1]:
        acc = acc * z + a
    return complex(acc) if acc.ndim == 0 else acc


def _check_nodes(nodes: np.ndarray) -> None:
    if nodes.size < 2:
        return
    scale = 1.0 + float(np.max(np.abs(nodes)))
    gaps = np.abs(nodes[:, None] - nodes[None, :])
    np.fill_diagonal(gaps, np.inf)
    i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
    if gaps[i, j] <= NODE_TOL * scale:
        raise DuplicateNodes(f"nodes {i} and {j} coincide ({nodes[i]!r})")


def barycentric_weights(nodes: Sequence[complex]) -> np.ndarray:
    x = np.asarray(nodes, dtype=complex).ravel()
    _check_nodes(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def interpolation_matrix(nodes: Sequence[complex]) -> np.ndarray:
    """Matrix ``M`` with ``coeffs = M @ values`` for the interpolant through ``nodes``.

    Column ``i`` holds the ascending coefficients of the Lagrange basis
    polynomial ``w_i * l(z) / (z - x_i)`` where ``l`` is the node polynomial
    and ``w_i`` the barycentric weight.  The quotient ``l(z)/(z - x_i)`` is
    obtained by synthetic division, so no Vandermonde system is solved.
    """
    x = np.asarray(nodes, dtype=complex).ravel()
    m = x.size
    w = barycentric_weights(x)
    ell = Poly.from_roots(x).coeffs  # degree m, monic
    out = np.empty((m, m), dtype=complex)
    for i in range(m):
        # synthetic division of ell by (z - x_i), highest coefficient first
        q = np.empty(m, dtype=complex)
        acc = ell[m]
        for k in range(m - 1, -1, -1):
            q[k] = acc
            acc = ell[k] + acc * x[i]
        out[:, i] = w[i] * q
    return out


def lagrange_interpolate(points: Sequence[tuple[complex, complex]]) -> Poly:
    """Unique polynomial of degree <= m-1 through ``m`` points."""
    if len(points) == 0:
        raise ValueError("need at least one point")
    xs = np.array([p[0] for p in points], dtype=complex)
    ys = np.array([p[1] for p in points], dtype=complex)
    return Poly(interpolation_matrix(xs) @ ys)


def interpolate_values(nodes: Sequence[complex], values: np.ndarray) -> np.ndarray:
    """Entry-wise interpolation: ``values`` has shape ``(m, ...)``.

    Returns coefficients of shape ``(m, ...)``; slice ``[:, i, j]`` is the
    coefficient vector of the interpolant for entry ``(i, j)``.
    """
    v = np.asarray(values, dtype=complex)
    M = interpolation_matrix(nodes)
    flat = v.reshape(v.shape[0], -1)
    return (M @ flat).reshape(v.shape)


def barycentric_eval(nodes: Sequence[complex], values: np.ndarray, z: complex,
                     weights: np.ndarray | None = None) -> np.ndarray:
    """Value at ``z`` of the interpolant through ``(nodes[i], values[i])``.

    Uses the first (modified Lagrange) barycentric form, which is backward
    stable; ``values`` may carry trailing axes for entry-wise interpolation.
    """
    x = np.asarray(nodes, dtype=complex).ravel()
    v = np.asarray(values, dtype=complex)
    w = barycentric_weights(x) if weights is None else weights
    diff = complex(z) - x
    hit = np.flatnonzero(diff == 0)
    if hit.size:
        return v[hit[0]].copy()
    coef = np.prod(diff) * w / diff
    return np.tensordot(coef, v, axes=(0, 0))


def eval_coefficients(coeffs: np.ndarray, z: complex) -> np.ndarray:
    """Horner evaluation of a batch of polynomials sharing axis 0 as degree."""
    acc = np.array(coeffs[-1], dtype=complex)
    for c in coeffs[-2::-1]:
        acc = acc * z + c
    return acc


def poly_roots(p: Poly) -> list[complex]:
    """All roots of ``p`` by simultaneous Durand-Kerner (Weierstrass) iteration."""
    deg = p.degree()
    if deg < 1:
        raise ValueError("poly_roots needs degree >= 1")
    c = p.coeffs[: deg + 1]
    scale = float(np.max(np.abs(c)))
    if abs(c[-1]) <= LEADING_TOL * scale:
        raise DegenerateLeading(f"leading coefficient {c[-1]!r} vs max {scale:g}")
    a = c / c[-1]
    radius = 1.0 + float(np.max(np.abs(a[:-1])))
    k = np.arange(deg)
    z = radius * np.exp(1j * (2 * np.pi * k / deg + ROOT_ANGLE_OFFSET))
    abs_a = np.abs(a)
    off_diag = ~np.eye(deg, dtype=bool)

    for _ in range(ROOT_MAX_ITER):
        pz = np.full(deg, a[-1], dtype=complex)
        mag = np.full(deg, abs_a[-1])
        az = np.abs(z)
        for coef, acoef in zip(a[-2::-1], abs_a[-2::-1]):
            pz = pz * z + coef
            mag = mag * az + acoef
        # |p(z)| inside the rounding error of Horner's rule: nothing left to gain
        if np.all(np.abs(pz) <= 4 * deg * EPS * mag):
            break
        diff = z[:, None] - z[None, :]
        denom = np.prod(np.where(off_diag, diff, 1.0), axis=1)
        denom = np.where(denom == 0, EPS, denom)
        step = pz / denom
        z = z - step
        if np.all(np.abs(step) <= ROOT_TOL * (1.0 + np.abs(z))):
            break
    else:
        raise NoConvergence(f"Durand-Kerner did not converge for degree {deg}")
    return [complex(r) for r in z]


def _row_reduce(M: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form with partial pivoting; returns (R, pivot_columns)."""
    A = as_cmatrix(M).copy()
    rows, cols = A.shape
    if A.size == 0:
        return A, []
    col_norm = float(np.max(np.linalg.norm(A, axis=0)))
    tol = PIVOT_TOL * col_norm
    pivots: list[int] = []
    r = 0
    for col in range(cols):
        if r == rows:
            break
        i = r + int(np.argmax(np.abs(A[r:, col])))
        if abs(A[i, col]) <= tol:
            continue
        if i != r:
            A[[r, i]] = A[[i, r]]
        A[r] = A[r] / A[r, col]
        others = np.arange(rows) != r
        A[others] -= np.outer(A[others, col], A[r])
        A[r, col] = 1.0
        A[others, col] = 0.0
        pivots.append(col)
        r += 1
    return A, pivots


def kernel_basis(M) -> list[np.ndarray]:
    """Basis of the null space of ``M``; an empty list means the kernel is trivial."""
    R, pivots = _row_reduce(M)
    cols = R.shape[1]
    basis = []
    for f in (c for c in range(cols) if c not in pivots):
        v = np.zeros(cols, dtype=complex)
        v[f] = 1.0
        for row, pc in enumerate(pivots):
            v[pc] = -R[row, f]
        basis.append(v)
    return basis


def matrix_rank(M) -> int:
    return len(_row_reduce(M)[1])


def determinant(M) -> complex:
    """Determinant by LU factorization with partial pivoting."""
    A = as_cmatrix(M).copy()
    n, m = A.shape
    if n != m:
        raise ValueError("determinant needs a square matrix")
    det = 1.0 + 0j
    for k in range(n):
        i = k + int(np.argmax(np.abs(A[k:, k])))
        if A[i, k] == 0:
            return 0j
        if i != k:
            A[[k, i]] = A[[i, k]]
            det = -det
        det *= A[k, k]
        A[k + 1:, k:] -= np.outer(A[k + 1:, k] / A[k, k], A[k, k:])
    return complex(det)


def poly_divide(num: Poly, den: Poly) -> tuple[Poly, Poly]:
    """Polynomial long division: ``num = den * quotient + remainder``."""
    dd = den.degree()
    if dd == ZERO_DEGREE:
        raise ZeroDivisor("division by the zero polynomial")
    d = den.coeffs[: dd + 1]
    r = num.trimmed().coeffs.copy()
    nd = num.degree()
    if nd < dd:
        return Poly.zero(), Poly(r)
    q = np.zeros(nd - dd + 1, dtype=complex)
    lead = d[-1]
    for k in range(nd - dd, -1, -1):
        coef = r[k + dd] / lead
        q[k] = coef
        r[k: k + dd + 1] -= coef * d
        r[k + dd] = 0.0
    rem = r[:dd] if dd > 0 else np.zeros(1, dtype=complex)
    return Poly(q), Poly(rem)


def min_pairwise_gap(points: Sequence[complex]) -> float:
    x = np.asarray(points, dtype=complex).ravel()
    if x.size < 2:
        return math.inf
    gaps = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(gaps, np.inf)
    return float(np.min(gaps))


def min_cross_gap(a: Sequence[complex], b: Sequence[complex]) -> float:
    x = np.asarray(a, dtype=complex).ravel()
    y = np.asarray(b, dtype=complex).ravel()
    if x.size == 0 or y.size == 0:
        return math.inf
    return float(np.min(np.abs(x[:, None] - y[None, :])))
