import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpa import numerics as nm
from cpa import pipeline as pl
from cpa.errors import (
    DimensionMismatch,
    InsufficientResponses,
    MissingResponses,
    NonScalarData,
    SchemeNotValidated,
)
from cpa.scheme import (
    CpaScheme,
    SystemParams,
    Verdict,
    check_feasibility,
    construct_evaluation_points,
    random_params,
    scheme_from_coefficients,
)

EX1 = SystemParams(3, 1, 2, (-0.5, 1, 0.5), (-1, 0, 1))


def instance(K, d, N, seed, q=2, v=2):
    rng = np.random.default_rng([seed, K, d, N])
    p = random_params(K, d, N, rng)
    s = construct_evaluation_points(p, rng)
    return p, s, pl.random_dataset(K, q, v, rng), pl.random_task(d, rng)


def test_dataset_shapes():
    assert pl.Dataset(np.zeros((3, 2, 4))).shape == (2, 4)
    assert pl.Dataset.from_scalars([1, 2]).matrices.shape == (2, 1, 1)
    with pytest.raises(DimensionMismatch):
        pl.Dataset(np.zeros((2, 2)))
    with pytest.raises(DimensionMismatch):
        pl.Dataset(np.array([[[np.nan]]]))


def test_task_degree_and_matrix_semantics():
    task = pl.TaskSpec(nm.Poly([1, 0, 2]))
    assert task.d == 2
    X = np.array([[1, 2], [3, 4]])
    assert np.array_equal(task.apply(X), 1 + 2 * X ** 2)  # entry-wise


def test_ground_truth_direct():
    data = pl.Dataset.from_scalars([1, 2, 3])
    task = pl.TaskSpec(nm.Poly([0, 0, 1]))
    assert pl.ground_truth(data, task, (1, -1, 2))[0, 0] == 1 - 4 + 18


def test_encode_matches_coefficient_route():
    p, s, data, _ = instance(5, 2, 6, 0)
    coeffs = nm.interpolate_values(p.alpha, data.matrices)
    for share in pl.encode(data, s):
        want = nm.eval_coefficients(coeffs, share.point)
        assert np.allclose(share.payload, want, atol=1e-10)


def test_encoder_interpolates_data():
    p, s, data, _ = instance(4, 1, 2, 1)
    at_alpha = CpaScheme(p, p.alpha, s.P, s.coeff_vector)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        shares = pl.encode(data, at_alpha)
    for k, share in enumerate(shares):
        assert np.array_equal(share.payload, data.matrices[k])


def test_example_end_to_end():
    s = scheme_from_coefficients(EX1, (-0.0506, 0.0506, 0.5))
    data = pl.Dataset.from_scalars([2, -1, 0.5])
    task = pl.TaskSpec(nm.Poly([3, -2]))
    res = pl.run_pipeline(data, s, task)
    assert res.method == pl.METHOD_CPA
    assert pl.recovery_error(res, pl.ground_truth(data, task, EX1.w)) < 1e-12


@pytest.mark.parametrize("K,d,N", [(3, 1, 2), (6, 1, 3), (4, 2, 4), (5, 3, 9), (8, 2, 8)])
def test_cpa_recovers_aggregate(K, d, N):
    p, s, data, task = instance(K, d, N, 2)
    err = pl.recovery_error(pl.run_pipeline(data, s, task), pl.ground_truth(data, task, p.w))
    assert err < 1e-8


def test_decoder_interpolates_responses():
    p, s, data, task = instance(5, 2, 5, 3)
    responses = [pl.worker_compute(sh, task) for sh in pl.encode(data, s)]
    res = pl.decode_cpa(responses, s)
    for r, b in zip(responses, s.beta):
        assert np.allclose(res.decoder(b), r.payload)
    coeffs = res.decoder_coefficients()
    assert coeffs.shape == (5, 2, 2)
    assert np.allclose(nm.eval_coefficients(coeffs, s.beta[2]), responses[2].payload, atol=1e-8)


def test_response_order_does_not_matter_bitwise():
    p, s, data, task = instance(6, 2, 7, 4)
    responses = [pl.worker_compute(sh, task) for sh in pl.encode(data, s)]
    a = pl.decode_cpa(responses, s).Y_hat
    b = pl.decode_cpa(responses[::-1], s).Y_hat
    assert np.array_equal(a, b)


def test_missing_duplicate_and_extra_responses():
    p, s, data, task = instance(4, 1, 2, 5)
    responses = [pl.worker_compute(sh, task) for sh in pl.encode(data, s)]
    with pytest.raises(MissingResponses):
        pl.decode_cpa(responses[:1], s)
    with pytest.raises(MissingResponses):
        pl.decode_cpa(responses + [responses[0]], s)
    with pytest.raises(MissingResponses):
        pl.decode_cpa(responses + [pl.WorkerResponse(7, responses[0].payload)], s)


def test_shape_mismatch_in_responses():
    p, s, data, task = instance(4, 1, 2, 6)
    responses = [pl.worker_compute(sh, task) for sh in pl.encode(data, s)]
    responses[1] = pl.WorkerResponse(1, np.zeros((3, 3)))
    with pytest.raises(DimensionMismatch):
        pl.decode_cpa(responses, s)


def test_wrong_dataset_size():
    p, s, data, task = instance(4, 1, 2, 7)
    with pytest.raises(DimensionMismatch):
        pl.encode(pl.Dataset(np.zeros((3, 2, 2))), s)


def test_strict_decode_refuses_unverified_points():
    s = CpaScheme.from_points(EX1, (0.3, 0.4))
    data = pl.Dataset.from_scalars([1, 5, -2])
    task = pl.TaskSpec(nm.Poly([0, 1]))
    with pytest.raises(SchemeNotValidated):
        pl.run_pipeline(data, s, task)
    res = pl.run_pipeline(data, s, task, strict=False)
    assert pl.recovery_error(res, pl.ground_truth(data, task, EX1.w)) > 1e-3


@pytest.mark.parametrize("K,d", [(3, 1), (4, 2), (5, 3)])
def test_individual_decoding(K, d):
    rng = np.random.default_rng([K, d])
    N = d * (K - 1) + 1
    p = random_params(K, d, N, rng)
    beta = tuple(1.3 * np.exp(2j * np.pi * (n + 0.5) / N) for n in range(N))
    data = pl.random_dataset(K, 2, 3, rng)
    task = pl.random_task(d, rng)
    s = CpaScheme.from_points(p, beta)
    responses = [pl.worker_compute(sh, task) for sh in pl.encode(data, s)]
    per, agg = pl.decode_individual(responses, beta, p)
    for k in range(K):
        assert np.allclose(per[k], task.apply(data.matrices[k]), atol=1e-8)
    assert agg.method == pl.METHOD_INDIVIDUAL
    assert pl.recovery_error(agg, pl.ground_truth(data, task, p.w)) < 1e-8
    with pytest.raises(InsufficientResponses):
        pl.decode_individual(responses[:-1], beta[:-1], p.with_n(N - 1))


def lagrange_abs(nodes, i, z):
    return abs(np.prod([(z - nodes[j]) / (nodes[i] - nodes[j]) for j in range(len(nodes)) if j != i]))


def test_baseline_amplification_definition():
    p = random_params(4, 2, 7, np.random.default_rng(9))
    beta = pl.individual_points(7, np.random.default_rng(1))
    size = [sum(lagrange_abs(p.alpha, k, b) for k in range(4)) ** 2 for b in beta]
    want = max(sum(lagrange_abs(beta, n, a) * size[n] for n in range(7)) for a in p.alpha)
    assert pl.baseline_amplification(p, beta) == pytest.approx(want, rel=1e-9)


@pytest.mark.parametrize("K,d", [(1, 2), (3, 1), (6, 3), (8, 3)])
def test_baseline_points_valid_and_deterministic(K, d):
    N = d * (K - 1) + 1
    p = random_params(K, d, N, np.random.default_rng([K, d, 1]))
    beta = pl.baseline_points(p, np.random.default_rng(3))
    assert beta == pl.baseline_points(p, np.random.default_rng(3))
    assert len(beta) == N
    assert nm.min_pairwise_gap(beta) > 0 and nm.min_cross_gap(p.alpha, beta) > 0
    assert check_feasibility(CpaScheme.from_points(p, beta)).verdict is Verdict.INDIVIDUAL_DECODING_REGIME


def test_baseline_points_beat_plain_circle():
    p = random_params(7, 3, 19, np.random.default_rng(11))
    plain = pl.baseline_amplification(p, pl.individual_points(19, np.random.default_rng(0)))
    assert pl.baseline_amplification(p, pl.baseline_points(p, np.random.default_rng(0))) < plain


def test_recovery_error_definition():
    assert pl.recovery_error(np.array([[3.0]]), np.array([[0.0]])) == 3.0
    assert pl.recovery_error(np.array([[11.0]]), np.array([[10.0]])) == pytest.approx(0.1)
    with pytest.raises(DimensionMismatch):
        pl.recovery_error(np.zeros((1, 2)), np.zeros((2, 1)))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(3, 1, 2), (5, 1, 3), (4, 2, 4), (5, 2, 6), (4, 3, 7)]),
       st.integers(0, 2 ** 32 - 1))
def test_error_polynomial_factors_through_P(kdn, seed):
    K, d, N = kdn
    p, s, data, task = instance(K, d, N, seed, 1, 1)
    rep = pl.error_polynomial_check(s, task, data)
    assert rep.feasible
    assert rep.remainder_norm < 1e-9
    assert rep.degree_ok
    assert rep.aggregate_error < 1e-9


def test_error_polynomial_on_infeasible_points():
    s = CpaScheme.from_points(EX1, (0.3, 0.4))
    data = pl.Dataset.from_scalars([1, 5, -2])
    rep = pl.error_polynomial_check(s, pl.TaskSpec(nm.Poly([0, 1])), data)
    assert not rep.feasible
    assert rep.remainder_norm < 1e-9  # vanishing at beta always holds
    assert rep.aggregate_error > 1e-6


def test_error_polynomial_needs_scalar_data():
    p, s, data, task = instance(4, 1, 2, 8)
    with pytest.raises(NonScalarData):
        pl.error_polynomial_check(s, task, data)
