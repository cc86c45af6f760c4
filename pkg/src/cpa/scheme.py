"""Feasibility theory and construction of evaluation points for CPA schemes.

A scheme aggregates ``sum_k w_k F(X_k)`` from ``N`` worker responses.  The
evaluation points ``beta`` are the roots of a monic polynomial ``P`` whose
coefficient vector lies in the kernel of ``U = V diag(w) A``, where ``V`` and
``A`` are Vandermonde matrices on the data points ``alpha``.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import numerics as nm
from .errors import (
    DegenerateLeading,
    DisjointnessViolated,
    GenericityExhausted,
    InfeasibleCgeK,
    InfeasibleTrivialKernel,
    InvalidParams,
    InvalidRegime,
    NoConstraints,
    NoConvergence,
    NotInKernel,
    RepeatedRoots,
    TooLarge,
)

WEIGHT_TOL = 1e-12
ALPHA_GAP_TOL = 1e-9
BETA_GAP_TOL = 1e-8
DISJOINT_TOL = 1e-8
RESIDUAL_TOL = 1e-9
LEADING_TOL = 1e-10
KERNEL_TOL = 1e-9
MAX_REDRAWS = 32
CANDIDATES = 8
SAMPLE_MIN_GAP = 1e-3
MAX_CB_SIZE = 6
ANCHOR_JITTER = (0.0, 1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)  # relative to |c|


class Verdict(str, enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    INFEASIBLE_C_GE_K = "InfeasibleCgeK"
    INFEASIBLE_TRIVIAL_KERNEL = "InfeasibleTrivialKernel"
    INDIVIDUAL_DECODING_REGIME = "IndividualDecodingRegime"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class FeasibilityCertificate:
    verdict: Verdict
    detail: str = ""
    residual: float = math.nan

    @property
    def ok(self) -> bool:
        return self.verdict in (Verdict.FEASIBLE, Verdict.INDIVIDUAL_DECODING_REGIME)


@dataclass(frozen=True)
class SystemParams:
    K: int
    d: int
    N: int
    w: tuple[complex, ...]
    alpha: tuple[complex, ...]

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(complex(x) for x in self.w))
        object.__setattr__(self, "alpha", tuple(complex(x) for x in self.alpha))
        if self.K < 1 or self.d < 1 or self.N < 1:
            raise InvalidParams(f"need K, d, N >= 1, got K={self.K} d={self.d} N={self.N}")
        if len(self.w) != self.K or len(self.alpha) != self.K:
            raise InvalidParams("w and alpha must both have K entries")
        vals = np.array(self.w + self.alpha)
        if not np.all(np.isfinite(vals)):
            raise InvalidParams("w and alpha must be finite")
        if min(abs(x) for x in self.w) <= WEIGHT_TOL:
            raise InvalidParams("every weight must be nonzero")
        scale = 1.0 + max(abs(a) for a in self.alpha)
        if nm.min_pairwise_gap(self.alpha) <= ALPHA_GAP_TOL * scale:
            raise InvalidParams("data points alpha must be pairwise distinct")

    @property
    def C(self) -> int:
        """Number of orthogonality constraints, ``d(K-1) - N + 1``."""
        return self.d * (self.K - 1) - self.N + 1

    @property
    def w_array(self) -> np.ndarray:
        return np.array(self.w, dtype=complex)

    @property
    def alpha_array(self) -> np.ndarray:
        return np.array(self.alpha, dtype=complex)

    def with_n(self, N: int) -> "SystemParams":
        return SystemParams(self.K, self.d, N, self.w, self.alpha)

    def with_weights(self, w: Sequence[complex]) -> "SystemParams":
        return SystemParams(self.K, self.d, self.N, tuple(w), self.alpha)


@dataclass(frozen=True)
class ConstraintSystem:
    V: np.ndarray
    A: np.ndarray
    U: np.ndarray
    kernel: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.U.shape[1] - len(self.kernel)


@dataclass(frozen=True)
class CpaScheme:
    params: SystemParams
    beta: tuple[complex, ...]
    P: nm.Poly
    coeff_vector: np.ndarray

    @classmethod
    def from_points(cls, params: SystemParams, beta: Sequence[complex]) -> "CpaScheme":
        """Wrap arbitrary evaluation points (unvalidated; see check_feasibility)."""
        P = nm.Poly.from_roots(beta)
        return cls(params, tuple(complex(b) for b in beta), P, P.coeffs.copy())

    @property
    def beta_array(self) -> np.ndarray:
        return np.array(self.beta, dtype=complex)


def min_responses(K: int, d: int) -> int:
    """Smallest number of responses admitting a feasible scheme for generic data points."""
    if K < 2 or d < 1:
        raise InvalidParams(f"min_responses needs K >= 2 and d >= 1, got K={K} d={d}")
    if d == 1:
        return (K - 1) // 2 + 1
    return (d - 1) * (K - 1) + 1


def individual_threshold(K: int, d: int) -> int:
    if K < 2 or d < 1:
        raise InvalidParams(f"individual_threshold needs K >= 2 and d >= 1, got K={K} d={d}")
    return d * (K - 1) + 1


def random_params(K: int, d: int, N: int, rng: np.random.Generator) -> SystemParams:
    """Generic instance: alpha uniform in the unit disk, weights with modulus in [0.5, 1.5]."""
    alpha: list[complex] = []
    while len(alpha) < K:
        z = complex(np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform()))
        if all(abs(z - a) >= SAMPLE_MIN_GAP for a in alpha):
            alpha.append(z)
    w = rng.uniform(0.5, 1.5, K) * np.exp(2j * np.pi * rng.uniform(size=K))
    return SystemParams(K, d, N, tuple(w), tuple(alpha))


def build_constraint_system(params: SystemParams) -> ConstraintSystem:
    C = params.C
    if C <= 0:
        raise NoConstraints(
            f"C = {C} <= 0: N = {params.N} > d(K-1), use individual decoding")
    a = params.alpha_array
    V = a[None, :] ** np.arange(C)[:, None]
    A = a[:, None] ** np.arange(params.N + 1)[None, :]
    U = (V * params.w_array[None, :]) @ A
    return ConstraintSystem(V, A, U, nm.kernel_basis(U))


def _point_scale(*groups: Sequence[complex]) -> float:
    vals = [abs(x) for g in groups for x in g]
    return 1.0 + (max(vals) if vals else 0.0)


def _check_roots(params: SystemParams, beta: Sequence[complex]) -> None:
    gap = nm.min_pairwise_gap(beta)
    if gap <= BETA_GAP_TOL * _point_scale(beta):
        raise RepeatedRoots(f"evaluation points collide (min gap {gap:.3e})")
    cross = nm.min_cross_gap(params.alpha, beta)
    if cross <= DISJOINT_TOL * _point_scale(params.alpha, beta):
        raise DisjointnessViolated(
            f"an evaluation point hits a data point (distance {cross:.3e})")


def _orthogonality_terms(params: SystemParams, p_at_alpha: np.ndarray,
                         p_magnitude: np.ndarray | None = None) -> tuple[float, float]:
    """(max_j |sum_k w_k p_k alpha_k^j|, rounding scale of those sums).

    ``p_magnitude`` bounds the size of the quantities that were summed to get
    each ``p_k`` (defaults to ``|p_k|``, right for the product form).
    """
    C = params.C
    if C <= 0:
        return 0.0, 1.0
    a = params.alpha_array
    mag = np.abs(p_at_alpha) if p_magnitude is None else p_magnitude
    powers = a[None, :] ** np.arange(C)[:, None]
    resid = float(np.max(np.abs(powers @ (params.w_array * p_at_alpha))))
    scale = float(np.max(np.abs(powers) @ (np.abs(params.w_array) * mag)))
    return resid, scale


def _horner_terms(scheme: CpaScheme) -> tuple[float, float]:
    a = scheme.params.alpha_array
    mag = np.abs(nm.Poly(np.abs(scheme.P.coeffs))(np.abs(a)))
    return _orthogonality_terms(scheme.params, scheme.P(a), mag)


def orthogonality_residual(scheme: CpaScheme) -> float:
    """Largest violation of ``sum_k w_k P(alpha_k) alpha_k^j = 0`` over j < C."""
    return _horner_terms(scheme)[0]


def residual_scale(scheme: CpaScheme) -> float:
    """Magnitude against which ``orthogonality_residual`` is judged.

    ``P`` is evaluated from its coefficients, so the scale uses
    ``sum_i |P_i| |alpha_k|^i`` in place of ``|P(alpha_k)|``.
    """
    return _horner_terms(scheme)[1]


def scheme_from_coefficients(params: SystemParams, c: Sequence[complex]) -> CpaScheme:
    """Scheme whose evaluation points are the roots of ``sum_n c_n z^n``."""
    c = np.asarray(c, dtype=complex).ravel()
    if c.size != params.N + 1:
        raise InvalidParams(f"coefficient vector must have N+1 = {params.N + 1} entries")
    system = build_constraint_system(params) if params.C >= 1 else None
    return _scheme_from_kernel_vector(params, system, c)


def _scheme_from_kernel_vector(params: SystemParams, system: ConstraintSystem | None,
                               c: np.ndarray) -> CpaScheme:
    norm = float(np.linalg.norm(c))
    if norm == 0 or abs(c[-1]) <= LEADING_TOL * norm:
        raise DegenerateLeading(f"|c_N| = {abs(c[-1]):.3e} is negligible")
    if system is not None:
        U = system.U
        defect = float(np.max(np.abs(U @ c)))
        tol = KERNEL_TOL * float(np.max(np.abs(U).sum(axis=1))) * float(np.max(np.abs(c)))
        if defect > tol:
            raise NotInKernel(f"|U c| = {defect:.3e} exceeds {tol:.3e}")
    monic = c / c[-1]
    monic[-1] = 1.0
    P = nm.Poly(monic)
    beta = nm.poly_roots(P)
    _check_roots(params, beta)
    return CpaScheme(params, tuple(beta), P, c)


def amplification_estimate(params: SystemParams, beta: Sequence[complex]) -> float:
    """Data-independent estimate of how much a scheme amplifies rounding errors.

    Sums two effects for unit-size data: the magnitude of the worker responses
    weighted by the decoding coefficients ``sum_k w_k l_n(alpha_k)``, and the
    sensitivity of the aggregate to perturbations of the evaluation points.
    Larger is worse; the value is a relative-error multiplier for ``eps``.
    """
    a = params.alpha_array
    b = np.asarray(beta, dtype=complex)
    w = params.w_array
    diff = b[:, None] - a[None, :]  # (N, K)
    enc = np.prod(diff, axis=1)[:, None] * nm.barycentric_weights(a)[None, :] / diff
    dec = np.prod(-diff.T, axis=1)[:, None] * nm.barycentric_weights(b)[None, :] / -diff.T
    resp = np.abs(enc).sum(axis=1) ** params.d  # response magnitude per worker
    rounding = float(np.sum(np.abs(w @ dec) * resp))
    shift = ((1.0 + np.abs(b))[None, :] / np.abs(diff.T)).sum(axis=1)
    sensitivity = float(np.sum(np.abs(w) * shift * (np.abs(dec) @ resp)))
    return rounding + sensitivity


def refine_points(params: SystemParams, beta: Sequence[complex],
                  max_iter: int = 40) -> np.ndarray:
    """Polish evaluation points so the orthogonality conditions hold to rounding level.

    Gauss-Newton on ``r_j(beta) = sum_k w_k alpha_k^j prod_n (alpha_k - beta_n)``
    with minimum-norm steps, so the points move as little as possible.
    Returns the best iterate seen (never worse than the input).
    """
    a = params.alpha_array
    b = np.array(beta, dtype=complex)
    if params.C <= 0:
        return b
    rows = a[None, :] ** np.arange(params.C)[:, None] * params.w_array[None, :]

    def evaluate(pts):
        p = np.prod(a[:, None] - pts[None, :], axis=1)
        r = rows @ p
        return r, p, float(np.max(np.abs(r)) / max(np.max(np.abs(rows) @ np.abs(p)), 1e-300))

    r, p, rel = evaluate(b)
    for _ in range(max_iter):
        if rel <= 2 * nm.EPS:
            break
        jac = -(rows * p[None, :]) @ (1.0 / (a[:, None] - b[None, :]))
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        size = float(np.max(np.abs(step)))
        if size > 0.5:
            step *= 0.5 / size
        cand = b + step
        r2, p2, rel2 = evaluate(cand)
        if not rel2 < rel:
            break
        b, r, p, rel = cand, r2, p2, rel2
    return b


def _anchored_target(params: SystemParams, rng: np.random.Generator) -> np.ndarray:
    """Coefficients of a monic polynomial with roots scattered around the data points."""
    a = params.alpha_array
    gap = min(nm.min_pairwise_gap(a), 1.0)
    roots = []
    for n in range(params.N):
        ring = 1 + n // params.K
        roots.append(a[n % params.K] + 0.3 * gap * ring * np.exp(2j * np.pi * rng.uniform()))
    return nm.Poly.from_roots(roots).coeffs


def construct_evaluation_points(params: SystemParams, seed=0,
                                candidates: int = CANDIDATES) -> CpaScheme:
    """Evaluation points for a feasible scheme from a vector in ker(U).

    Kernel vectors are drawn at random, alternating between isotropic draws
    from the kernel basis and projections of a target polynomial whose roots
    sit near the data points (nudged by the smallest admissible random kernel
    component).  Degenerate draws (negligible leading
    coefficient, colliding roots, a root on a data point) are rejected; for
    generic data points they form a measure-zero set.  Among the admissible
    draws the one with the smallest ``amplification_estimate`` is kept, and
    its roots are polished with ``refine_points``.
    """
    C = params.C
    if C >= params.K:
        raise InfeasibleCgeK(f"C = {C} >= K = {params.K}")
    system = build_constraint_system(params)
    if not system.kernel:
        raise InfeasibleTrivialKernel(f"ker(U) is trivial (rank {system.rank} = N+1)")
    basis = np.stack(system.kernel, axis=1)
    ortho = np.linalg.qr(basis)[0]
    m = basis.shape[1]
    rng = np.random.default_rng(seed)

    best: tuple[float, np.ndarray, np.ndarray] | None = None
    admissible = 0
    last: Exception | None = None
    rejectable = (DegenerateLeading, RepeatedRoots, DisjointnessViolated, NoConvergence, NotInKernel)
    for attempt in range(candidates + MAX_REDRAWS):
        if admissible >= candidates:
            break
        if attempt % 2 == 0:
            draws = [basis @ (rng.standard_normal(m) + 1j * rng.standard_normal(m))]
        else:
            # The bare projection of an anchored target is the best-conditioned
            # choice but may leave a root inside the disjointness tolerance;
            # escalate a random kernel component until the draw is admissible.
            base = ortho @ (ortho.conj().T @ _anchored_target(params, rng))
            direction = ortho @ (rng.standard_normal(m) + 1j * rng.standard_normal(m))
            direction *= np.linalg.norm(base) / np.linalg.norm(direction)
            draws = (base + mu * direction for mu in ANCHOR_JITTER)
        for c in draws:
            try:
                trial = _scheme_from_kernel_vector(params, system, c)
            except rejectable as exc:
                last = exc
                continue
            admissible += 1
            score = amplification_estimate(params, trial.beta)
            if best is None or score < best[0]:
                best = (score, trial.beta_array, c)
            break
    if best is None:
        raise GenericityExhausted(
            f"no admissible kernel vector after {MAX_REDRAWS} redraws (last: {last})")

    _, beta, c = best
    beta = refine_points(params, beta)
    _check_roots(params, beta)
    P = nm.Poly.from_roots(beta)
    scheme = CpaScheme(params, tuple(complex(b) for b in beta), P, P.coeffs * c[-1])
    if not orthogonality_residual(scheme) < RESIDUAL_TOL * residual_scale(scheme):
        raise GenericityExhausted("best admissible draw misses the orthogonality tolerance")
    return scheme


def check_feasibility(scheme: CpaScheme) -> FeasibilityCertificate:
    """Verify a scheme from alpha, beta and w alone (ignores scheme.P)."""
    params = scheme.params
    beta = scheme.beta_array
    if beta.size != params.N:
        return FeasibilityCertificate(
            Verdict.INFEASIBLE, f"expected {params.N} evaluation points, got {beta.size}")
    if not np.all(np.isfinite(beta)):
        return FeasibilityCertificate(Verdict.INFEASIBLE, "non-finite evaluation point")
    gap = nm.min_pairwise_gap(beta)
    if gap <= BETA_GAP_TOL * _point_scale(beta):
        return FeasibilityCertificate(
            Verdict.INFEASIBLE, f"distinctness violated: min gap {gap:.3e}")
    if params.C <= 0:
        return FeasibilityCertificate(
            Verdict.INDIVIDUAL_DECODING_REGIME,
            f"N = {params.N} >= d(K-1)+1: decoder interpolates F(E(z)) exactly", 0.0)
    cross = nm.min_cross_gap(params.alpha, beta)
    if cross <= DISJOINT_TOL * _point_scale(params.alpha, beta):
        return FeasibilityCertificate(
            Verdict.INFEASIBLE, f"disjointness violated: distance {cross:.3e}")
    a = params.alpha_array
    p = np.prod(a[:, None] - beta[None, :], axis=1)
    resid, scale = _orthogonality_terms(params, p)
    if resid < RESIDUAL_TOL * scale:
        return FeasibilityCertificate(
            Verdict.FEASIBLE, f"{params.C} orthogonality conditions hold", resid)
    return FeasibilityCertificate(
        Verdict.INFEASIBLE,
        f"orthogonality violated: residual {resid:.3e} vs scale {scale:.3e}", resid)


def infeasibility_certificate(params: SystemParams) -> FeasibilityCertificate:
    """Necessity check: can any evaluation points work for these data points?"""
    C, K, N = params.C, params.K, params.N
    if C <= 0:
        return FeasibilityCertificate(
            Verdict.INDIVIDUAL_DECODING_REGIME, f"N = {N} > d(K-1) = {params.d * (K - 1)}")
    if C >= K:
        return FeasibilityCertificate(
            Verdict.INFEASIBLE_C_GE_K,
            f"C = {C} >= K = {K}: V diag(w) has trivial kernel, forcing P(alpha_k) = 0")
    system = build_constraint_system(params)
    if system.rank == N + 1:
        return FeasibilityCertificate(
            Verdict.INFEASIBLE_TRIVIAL_KERNEL,
            f"rank(U) = {system.rank} = N+1 (C = {C}): only c = 0 solves U c = 0")
    return FeasibilityCertificate(
        Verdict.UNDETERMINED,
        f"C = {C} < min(K, N+1) = {min(K, N + 1)}, dim ker(U) = {len(system.kernel)}")


class CauchyBinet(NamedTuple):
    lhs: complex
    rhs: complex
    agree: bool


def cauchy_binet_check(params: SystemParams) -> CauchyBinet:
    """det of the leading C x C block of U against its Cauchy-Binet expansion."""
    C, K = params.C, params.K
    if C > MAX_CB_SIZE:
        raise TooLarge(f"C = {C} > {MAX_CB_SIZE}")
    if C < 1 or C > K or C > params.N + 1:
        raise InvalidParams(f"need 1 <= C <= min(K, N+1), got C={C}")
    system = build_constraint_system(params)
    lhs = nm.determinant(system.U[:, :C])
    w = params.w_array
    A = system.A
    rhs = 0j
    for S in itertools.combinations(range(K), C):
        idx = list(S)
        rhs += np.prod(w[idx]) * nm.determinant(A[np.ix_(idx, range(C))]) ** 2
    rhs = complex(rhs)
    return CauchyBinet(lhs, rhs, abs(lhs - rhs) < 1e-8 * (1.0 + abs(lhs)))


@dataclass
class ProbeReport:
    K: int
    d: int
    N: int
    trials: int
    success: float
    leading_nonzero: float
    disjoint: float
    distinct_roots: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _first_draw_properties(params: SystemParams, rng: np.random.Generator) -> tuple[bool, bool, bool]:
    system = build_constraint_system(params)
    basis = np.stack(system.kernel, axis=1)
    m = basis.shape[1]
    c = basis @ (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    leading = abs(c[-1]) > LEADING_TOL * float(np.linalg.norm(c))
    mags = np.abs(system.A) @ np.abs(c)
    disjoint = bool(np.all(np.abs(system.A @ c) > DISJOINT_TOL * mags))
    distinct = False
    if leading:
        try:
            beta = nm.poly_roots(nm.Poly(c))
            distinct = nm.min_pairwise_gap(beta) > BETA_GAP_TOL * _point_scale(beta)
        except NoConvergence:
            pass
    return leading, disjoint, distinct


def genericity_probe(K: int, d: int, N: int, trials: int, seed: int = 0) -> ProbeReport:
    """Monte-Carlo stand-ins for the three genericity requirements on ker(U).

    For each random draw of data points, the first random kernel vector is
    tested for a nonzero leading coefficient, nonvanishing at every data point
    and distinct roots; separately, the full construction (with redraws) is run
    and verified.
    """
    if trials < 1:
        raise InvalidRegime("trials must be >= 1")
    if K < 2:
        raise InvalidRegime("K must be >= 2")
    n_star = min_responses(K, d)
    if not (n_star <= N <= d * (K - 1)):
        raise InvalidRegime(f"N = {N} outside [N*, d(K-1)] = [{n_star}, {d * (K - 1)}]")
    counts = np.zeros(4)
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, K, d, N, t]))
        params = random_params(K, d, N, rng)
        counts[1:] += _first_draw_properties(params, rng)
        try:
            scheme = construct_evaluation_points(params, rng)
        except GenericityExhausted:
            continue
        counts[0] += check_feasibility(scheme).verdict is Verdict.FEASIBLE
    frac = counts / trials
    return ProbeReport(K, d, N, trials, *map(float, frac))
