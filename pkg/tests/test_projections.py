"""Simplex, ball, pairwise and envelope projections."""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlabel.potentials import potts, truncated_linear
from mlabel.projections import (
    dykstra_project,
    label_pairs,
    project_envelope,
    project_pair,
    project_simplex,
    project_unit_ball,
    project_zero_sum,
)
from oracles import pairwise_qp, simplex_active_set

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_simplex_matches_active_set_oracle(rng):
    for l in range(2, 17):
        y = 3.0 * rng.standard_normal((40, l))
        x = project_simplex(y)
        for row, xr in zip(y, x):
            np.testing.assert_allclose(xr, simplex_active_set(row), atol=1e-10)


def test_simplex_known_values():
    np.testing.assert_allclose(project_simplex(np.array([0.2, 0.3, 0.5])), [0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0])
    np.testing.assert_allclose(project_simplex(np.array([1.0, 1.0, 1.0])), [1 / 3] * 3)
    # shift is (sum - 1) / 2 = 0.5 on the two free entries
    np.testing.assert_allclose(project_simplex(np.array([1.0, 1.0, -5.0])), [0.5, 0.5, 0.0])


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 12), elements=finite))
def test_simplex_kkt(y):
    x = project_simplex(y)
    assert np.all(x >= 0)
    assert abs(x.sum() - 1.0) < 1e-10
    # KKT: y - x = nu on the support and <= nu off it
    r = y - x
    supp = x > 1e-12
    nu = r[supp].mean()
    np.testing.assert_allclose(r[supp], nu, atol=1e-9)
    assert np.all(r[~supp] <= nu + 1e-9)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(2, 8), elements=finite))
def test_simplex_idempotent_and_translation_invariant(y):
    x = project_simplex(y)
    np.testing.assert_allclose(project_simplex(x), x, atol=1e-12)
    np.testing.assert_allclose(project_simplex(y + 3.7), x, atol=1e-9)


def test_simplex_batched_shapes(rng):
    y = rng.standard_normal((3, 5, 4))
    x = project_simplex(y)
    assert x.shape == y.shape
    np.testing.assert_allclose(x[1, 2], project_simplex(y[1, 2]))


def test_unit_ball(rng):
    v = rng.standard_normal((50, 2, 3)) * 2
    p = project_unit_ball(v)
    norms = np.linalg.norm(p.reshape(50, -1), axis=1)
    assert np.all(norms <= 1 + 1e-12)
    inside = np.linalg.norm(v.reshape(50, -1), axis=1) <= 1
    np.testing.assert_array_equal(p[inside], v[inside])
    np.testing.assert_allclose(project_unit_ball(np.zeros((2, 3))), 0.0)
    np.testing.assert_allclose(np.linalg.norm(project_unit_ball(v, radius=0.5)[~inside].reshape(-1, 6), axis=1), 0.5)


def test_project_pair(rng):
    v = rng.standard_normal((2, 3)) * 3
    w = project_pair(v, 0, 2, 0.5)
    assert np.linalg.norm(w[:, 0] - w[:, 2]) == pytest.approx(0.5)
    np.testing.assert_array_equal(w[:, 1], v[:, 1])
    # midpoint is preserved
    np.testing.assert_allclose(w[:, 0] + w[:, 2], v[:, 0] + v[:, 2])
    with pytest.raises(ValueError):
        project_pair(v, 1, 1, 1.0)


def test_label_pairs_order():
    assert label_pairs(3) == [(0, 1), (0, 2), (1, 2)]


def test_zero_sum(rng):
    v = rng.standard_normal((4, 2, 5))
    np.testing.assert_allclose(project_zero_sum(v).sum(axis=-1), 0.0, atol=1e-13)


@pytest.mark.parametrize("metric", [potts(3), potts(4), truncated_linear(4, 1.0, 2.0)])
def test_dykstra_matches_qp_oracle(metric, rng):
    D = metric.D * 0.5
    for _ in range(5):
        v = 1.5 * rng.standard_normal((2, metric.l))
        res = dykstra_project(v, D, tol=1e-13, max_iter=20000)
        np.testing.assert_allclose(res.x, pairwise_qp(v, D), atol=1e-5)


def test_envelope_projection_matches_constrained_qp(rng):
    D = potts(4).D
    for _ in range(5):
        v = 2 * rng.standard_normal((2, 4))
        p = project_envelope(v, D, tol=1e-13, max_iter=20000)
        np.testing.assert_allclose(p, pairwise_qp(v, D, zero_sum=True), atol=1e-5)


def test_dykstra_feasible_points_unchanged(rng):
    D = potts(4).D
    v = project_envelope(rng.standard_normal((10, 2, 4)), D, 1e-12, 5000)
    res = dykstra_project(v, D, tol=1e-12, max_iter=100)
    np.testing.assert_allclose(res.x, v, atol=1e-10)


def test_dykstra_batched_equals_blockwise(rng):
    D = truncated_linear(5, 1.0, 2.0).D
    v = 2 * rng.standard_normal((7, 2, 5))
    batch = dykstra_project(v, D, tol=1e-4, max_iter=30).x
    for b in range(7):
        np.testing.assert_array_equal(batch[b], dykstra_project(v[b], D, 1e-4, 30).x)


def test_dykstra_validates_arguments():
    with pytest.raises(ValueError):
        dykstra_project(np.zeros((1, 3)), potts(3).D, tol=0.0)
    with pytest.raises(ValueError):
        dykstra_project(np.zeros((1, 3)), potts(3).D, max_iter=0)


def test_dykstra_reports_sweeps(rng):
    res = dykstra_project(5 * rng.standard_normal((3, 2, 4)), potts(4).D, tol=1e-12, max_iter=3)
    assert res.iterations == 3
    assert res.delta > 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.1, 10))
def test_envelope_output_is_nearly_feasible(seed, scale):
    r = np.random.default_rng(seed)
    D = potts(4).D
    p = project_envelope(scale * r.standard_normal((5, 2, 4)), D, 1e-9, 50000)
    np.testing.assert_allclose(p.sum(axis=-1), 0.0, atol=1e-12)
    for i, j in label_pairs(4):
        dist = np.linalg.norm(p[:, :, i] - p[:, :, j], axis=1)
        assert np.all(dist <= D[i, j] + 1e-6)


def test_simplex_timing_budget(rng):
    y = rng.standard_normal((10**4, 16))
    t0 = time.perf_counter()
    project_simplex(y)
    assert time.perf_counter() - t0 < 5.0
    assert math.isfinite(float(y.sum()))


def test_simplex_hand_value():
    np.testing.assert_allclose(project_simplex(np.array([0.4, 0.3, -0.1])), [0.4 + 0.4 / 3, 0.3 + 0.4 / 3, -0.1 + 0.4 / 3])


def test_zero_sum_matches_projection_matrix(rng):
    v = rng.standard_normal((2, 5))
    P = np.eye(5) - np.ones((5, 5)) / 5
    np.testing.assert_allclose(project_zero_sum(v), v @ P, atol=1e-14)


def test_envelope_radius_potts3(rng):
    p = project_envelope(4 * rng.standard_normal((200, 2, 3)), potts(3).D, 1e-9, 10**4)
    assert np.linalg.norm(p.reshape(200, -1), axis=1).max() <= np.sqrt(2) + 1e-6


def test_unit_ball_is_nearest_point_oracle(rng):
    # projected gradient on the distance objective, run long
    v = 3 * rng.standard_normal((2, 3))
    x = np.zeros_like(v)
    for _ in range(2000):
        x = x - 0.1 * (x - v)
        x = x / max(1.0, np.linalg.norm(x))
    np.testing.assert_allclose(project_unit_ball(v), x, atol=1e-10)


def test_dual_field_is_pixelwise(rng):
    from mlabel.potentials import Envelope, Euclidean, RegularizerSpec, exact_embedding
    from mlabel.projections import project_dual_field

    v = 2 * rng.standard_normal((6, 2, 3))
    env = RegularizerSpec(Envelope(potts(3)), 0.8)
    euc = RegularizerSpec(Euclidean(exact_embedding("potts", 3)))
    pe = project_dual_field(v, env, 1e-6, 200)
    pu = project_dual_field(v, euc)
    for x in range(6):
        np.testing.assert_array_equal(pe[x], project_envelope(v[x], 0.8 * potts(3).D, 1e-6, 200))
        np.testing.assert_array_equal(pu[x], project_unit_ball(v[x]))
