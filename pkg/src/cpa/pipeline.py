"""Encode / compute / decode for one CPA round, plus the individual-decoding baseline."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nm
from .errors import (
    DimensionMismatch,
    InsufficientResponses,
    MissingResponses,
    NonScalarData,
    SchemeNotValidated,
)
from .scheme import CpaScheme, SystemParams, Verdict, check_feasibility

SELF_CHECK_TOL = 1e-9
BASELINE_RADIUS = 1.3
BASELINE_SEARCH_STEPS = 200
BASELINE_RING_RADII = (0.02, 0.1)  # fraction of the smallest data-point gap
BASELINE_CIRCLE_RADII = (0.8, 1.0)  # fraction of the data points' spread about their centroid

METHOD_CPA = "CPA"
METHOD_INDIVIDUAL = "IndividualDecoding"


@dataclass(frozen=True)
class Dataset:
    """K equally shaped complex matrices stacked as an array of shape (K, q, v)."""

    matrices: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrices, dtype=complex)
        if m.ndim == 1:
            m = m.reshape(-1, 1, 1)
        if m.ndim != 3:
            raise DimensionMismatch(f"dataset must have shape (K, q, v), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DimensionMismatch("dataset entries must be finite")
        object.__setattr__(self, "matrices", m)

    @classmethod
    def from_scalars(cls, xs: Sequence[complex]) -> "Dataset":
        return cls(np.asarray(xs, dtype=complex).reshape(-1, 1, 1))

    @property
    def K(self) -> int:
        return self.matrices.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrices.shape[1:]


@dataclass(frozen=True)
class TaskSpec:
    F: nm.Poly

    @property
    def d(self) -> int:
        return self.F.degree()

    def apply(self, x) -> np.ndarray:
        return np.asarray(self.F(np.asarray(x, dtype=complex)), dtype=complex)


@dataclass(frozen=True)
class EncodedShare:
    worker_index: int
    point: complex
    payload: np.ndarray


@dataclass(frozen=True)
class WorkerResponse:
    worker_index: int
    payload: np.ndarray


@dataclass(frozen=True)
class AggregateResult:
    """Decoded aggregate plus the interpolation data defining the decoder D."""

    Y_hat: np.ndarray
    method: str
    nodes: tuple[complex, ...] = ()
    values: np.ndarray | None = None  # D(nodes[n]), shape (N, q, v)

    def decoder(self, z: complex) -> np.ndarray:
        return nm.barycentric_eval(self.nodes, self.values, z)

    def decoder_coefficients(self) -> np.ndarray:
        """Entry-wise coefficients of D, shape (N, q, v)."""
        return nm.interpolate_values(self.nodes, self.values)


def random_dataset(K: int, q: int, v: int, rng: np.random.Generator) -> Dataset:
    """Entries uniform in the complex unit disk."""
    r = np.sqrt(rng.uniform(size=(K, q, v)))
    return Dataset(r * np.exp(2j * np.pi * rng.uniform(size=(K, q, v))))


def random_task(d: int, rng: np.random.Generator) -> TaskSpec:
    """Degree-d polynomial with coefficients in the unit disk, leading modulus >= 0.5."""
    c = np.sqrt(rng.uniform(size=d + 1)) * np.exp(2j * np.pi * rng.uniform(size=d + 1))
    c[-1] = rng.uniform(0.5, 1.0) * np.exp(2j * np.pi * rng.uniform())
    return TaskSpec(nm.Poly(c))


def individual_points(N: int, rng: np.random.Generator,
                      radius: float = BASELINE_RADIUS) -> tuple[complex, ...]:
    """N equally spaced points on a circle with a random rotation.

    Arbitrary distinct points, used where any choice off the data points will
    do (e.g. as a generic infeasible choice for CPA).  For accurate
    individual decoding prefer ``baseline_points``.
    """
    theta = rng.uniform()
    return tuple(complex(radius * np.exp(2j * np.pi * (n + theta) / N)) for n in range(N))


def _basis_moduli(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """``|l_i(t)|`` for the Lagrange basis of ``nodes``; rows index targets."""
    w = nm.barycentric_weights(nodes)
    diff = targets[:, None] - nodes[None, :]
    return np.abs(np.prod(diff, axis=1)[:, None] * w[None, :] / diff)


def baseline_amplification(params: SystemParams, beta: Sequence[complex]) -> float:
    """How much individual decoding through ``beta`` can magnify rounding.

    Response n has size about ``(sum_k |l_k(beta_n)|)**d`` relative to the
    data (Lagrange basis of alpha), and recovering F(X_k) weighs it by the
    beta basis at alpha_k.  The worst weighted row sum bounds the error in
    units of machine epsilon.
    """
    a, b = params.alpha_array, np.asarray(beta, dtype=complex)
    size = _basis_moduli(a, b).sum(axis=1) ** params.d
    return float((_basis_moduli(b, a) * size[None, :]).sum(axis=1).max())


def _baseline_starts(params: SystemParams, theta: float, gap: float) -> list[np.ndarray]:
    a = params.alpha_array
    K, N = params.K, params.N
    counts = [N // K + (k < N % K) for k in range(K)]
    starts = [np.array([a[k] + rho * gap * np.exp(2j * np.pi * (theta + j / m + 0.37 * k))
                        for k, m in enumerate(counts) for j in range(m)])
              for rho in BASELINE_RING_RADII]
    centre = a.mean()
    spread = float(np.max(np.abs(a - centre))) or 1.0
    ring = np.exp(2j * np.pi * (np.arange(N) + theta) / N)
    starts += [centre + f * spread * ring for f in BASELINE_CIRCLE_RADII]
    return starts


def baseline_points(params: SystemParams, rng: np.random.Generator,
                    steps: int = BASELINE_SEARCH_STEPS) -> tuple[complex, ...]:
    """Evaluation points for individual decoding, chosen for accuracy.

    Any N >= d(K-1)+1 distinct points off the data points decode exactly in
    exact arithmetic, but in floating point the error scales with
    ``baseline_amplification``, which for clustered data points varies by
    many orders of magnitude between choices.  Small rings around each data
    point and circles about their centroid are scored, and the best is
    improved by a random single-point search.  Deterministic given ``rng``.
    """
    a = params.alpha_array
    gap = min(nm.min_pairwise_gap(a), 1.0)
    floor = 1e-3 * gap
    theta = rng.uniform()

    def admissible(beta):
        return nm.min_pairwise_gap(beta) > floor and nm.min_cross_gap(a, beta) > floor

    scored = [(baseline_amplification(params, b), b)
              for b in _baseline_starts(params, theta, gap) if admissible(b)]
    best, beta = min(scored, key=lambda sb: sb[0])
    for _ in range(steps):
        n = int(rng.integers(params.N))
        trial = beta.copy()
        trial[n] += 0.2 * gap * complex(*rng.standard_normal(2))
        if not admissible(trial):
            continue
        score = baseline_amplification(params, trial)
        if score < best:
            best, beta = score, trial
    return tuple(complex(b) for b in beta)


def _check_params(data: Dataset, params: SystemParams) -> None:
    if data.K != params.K:
        raise DimensionMismatch(f"dataset has {data.K} matrices, params expect K={params.K}")


def ground_truth(data: Dataset, task: TaskSpec, w: Sequence[complex]) -> np.ndarray:
    """Direct weighted aggregate ``sum_k w_k F(X_k)``."""
    w = np.asarray(w, dtype=complex).ravel()
    if w.size != data.K:
        raise DimensionMismatch(f"{w.size} weights for {data.K} matrices")
    out = np.zeros(data.shape, dtype=complex)
    for k in range(data.K):
        out += w[k] * task.apply(data.matrices[k])
    return out


def encode(data: Dataset, scheme: CpaScheme) -> list[EncodedShare]:
    """Evaluate the entry-wise encoder E (E(alpha_k) = X_k) at every beta_n."""
    params = scheme.params
    _check_params(data, params)
    weights = nm.barycentric_weights(params.alpha)
    X = data.matrices
    scale = 1.0 + float(np.max(np.abs(X)))
    worst = max(float(np.max(np.abs(nm.barycentric_eval(params.alpha, X, a, weights) - X[k])))
                for k, a in enumerate(params.alpha))
    if worst >= SELF_CHECK_TOL * scale:
        warnings.warn(f"encoder self-check: |E(alpha_k) - X_k| = {worst:.3e}", RuntimeWarning)
    return [EncodedShare(n, b, nm.barycentric_eval(params.alpha, X, b, weights))
            for n, b in enumerate(scheme.beta)]


def worker_compute(share: EncodedShare, task: TaskSpec) -> WorkerResponse:
    return WorkerResponse(share.worker_index, task.apply(share.payload))


def _ordered_payloads(responses: Sequence[WorkerResponse], N: int) -> np.ndarray:
    by_index = {}
    for r in responses:
        if r.worker_index in by_index:
            raise MissingResponses(f"duplicate response from worker {r.worker_index}")
        by_index[r.worker_index] = r
    missing = sorted(set(range(N)) - set(by_index))
    if missing:
        raise MissingResponses(f"no response from workers {missing}")
    extra = sorted(set(by_index) - set(range(N)))
    if extra:
        raise MissingResponses(f"responses from unknown workers {extra}")
    payloads = [np.asarray(by_index[n].payload, dtype=complex) for n in range(N)]
    shapes = {p.shape for p in payloads}
    if len(shapes) != 1:
        raise DimensionMismatch(f"response payloads have differing shapes {shapes}")
    return np.stack(payloads)


def _decode_at_alpha(beta: Sequence[complex], values: np.ndarray,
                     params: SystemParams) -> list[np.ndarray]:
    weights = nm.barycentric_weights(beta)
    return [nm.barycentric_eval(beta, values, a, weights) for a in params.alpha]


def _weighted_sum(params: SystemParams, parts: list[np.ndarray]) -> np.ndarray:
    out = np.zeros(parts[0].shape, dtype=complex)
    for w, part in zip(params.w, parts):
        out += w * part
    return out


def decode_cpa(responses: Sequence[WorkerResponse], scheme: CpaScheme,
               strict: bool = True) -> AggregateResult:
    """Interpolate D through the responses and return ``sum_k w_k D(alpha_k)``.

    Responses are ordered by worker index before interpolation, so the
    floating-point result does not depend on arrival order.  With ``strict``
    (the default) the scheme is verified first, and a scheme that is neither
    feasible nor in the individual-decoding regime is refused.  Pass
    ``strict=False`` to decode anyway, e.g. to measure how badly an infeasible
    choice of evaluation points fails.
    """
    params = scheme.params
    if strict:
        cert = check_feasibility(scheme)
        if not cert.ok:
            raise SchemeNotValidated(f"{cert.verdict.value}: {cert.detail}")
    values = _ordered_payloads(responses, params.N)
    y_hat = _weighted_sum(params, _decode_at_alpha(scheme.beta, values, params))
    return AggregateResult(y_hat, METHOD_CPA, tuple(scheme.beta), values)


def decode_individual(responses: Sequence[WorkerResponse], beta: Sequence[complex],
                      params: SystemParams) -> tuple[list[np.ndarray], AggregateResult]:
    """Recover every F(X_k) as D(alpha_k), then aggregate."""
    need = params.d * (params.K - 1) + 1
    if params.N < need:
        raise InsufficientResponses(f"N = {params.N} < d(K-1)+1 = {need}")
    if len(beta) != params.N:
        raise MissingResponses(f"{len(beta)} evaluation points for N = {params.N}")
    values = _ordered_payloads(responses, params.N)
    per_dataset = _decode_at_alpha(beta, values, params)
    agg = _weighted_sum(params, per_dataset)
    return per_dataset, AggregateResult(agg, METHOD_INDIVIDUAL, tuple(complex(b) for b in beta), values)


def run_pipeline(data: Dataset, scheme: CpaScheme, task: TaskSpec,
                 strict: bool = True) -> AggregateResult:
    responses = [worker_compute(s, task) for s in encode(data, scheme)]
    return decode_cpa(responses, scheme, strict=strict)


def recovery_error(result: AggregateResult | np.ndarray, truth: np.ndarray) -> float:
    """Relative Frobenius error ``|Y_hat - Y| / max(1, |Y|)``."""
    y_hat = result.Y_hat if isinstance(result, AggregateResult) else np.asarray(result)
    truth = np.asarray(truth)
    if y_hat.shape != truth.shape:
        raise DimensionMismatch(f"{y_hat.shape} vs {truth.shape}")
    return float(np.linalg.norm(y_hat - truth) / max(1.0, np.linalg.norm(truth)))


@dataclass
class ErrorPolynomialReport:
    delta: nm.Poly
    quotient: nm.Poly
    degree: int
    degree_bound: int
    remainder_norm: float
    aggregate_error: float
    feasible: bool

    @property
    def degree_ok(self) -> bool:
        return self.degree <= self.degree_bound


def error_polynomial_check(scheme: CpaScheme, task: TaskSpec, data: Dataset) -> ErrorPolynomialReport:
    """Build D - F(E(z)) explicitly and test its factorization through P.

    ``remainder_norm`` is the largest remainder coefficient of the division by
    P, relative to max(1, largest coefficient of D - F(E)).
    """
    if data.shape != (1, 1):
        raise NonScalarData(f"error polynomial diagnostic needs scalar data, got {data.shape}")
    params = scheme.params
    _check_params(data, params)
    E = nm.lagrange_interpolate(list(zip(params.alpha, data.matrices[:, 0, 0])))
    responses = [worker_compute(s, task) for s in encode(data, scheme)]
    values = _ordered_payloads(responses, params.N)[:, 0, 0]
    D = nm.lagrange_interpolate(list(zip(scheme.beta, values)))
    delta = D - task.F.compose(E)
    q, rem = nm.poly_divide(delta, scheme.P)
    size = max(1.0, float(np.max(np.abs(delta.coeffs))))
    # degree up to rounding: coefficients below the noise floor do not count
    significant = np.flatnonzero(np.abs(delta.coeffs) > 1e-9 * size)
    degree = int(significant[-1]) if significant.size else nm.ZERO_DEGREE
    agg = sum(w * delta(a) for w, a in zip(params.w, params.alpha))
    feasible = check_feasibility(scheme).verdict in (
        Verdict.FEASIBLE, Verdict.INDIVIDUAL_DECODING_REGIME)
    return ErrorPolynomialReport(
        delta=delta,
        quotient=q,
        degree=degree,
        degree_bound=params.d * (params.K - 1),
        remainder_norm=float(np.max(np.abs(rem.coeffs))) / size,
        aggregate_error=abs(agg),
        feasible=feasible,
    )
