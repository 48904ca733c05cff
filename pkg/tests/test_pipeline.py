"""Data terms, class merging, binarization and benchmark generators."""

import numpy as np
import pytest

from conftest import random_potts_problem
from mlabel.grid import Grid
from mlabel.pipeline import (
    BENCHMARKS,
    ClassMap,
    LabelSet,
    binarization_bound,
    binarize_first_max,
    binarize_psi_nearest,
    build_l1_data_term,
    collapse_zero_distance_classes,
    four_colors,
    generate_benchmark,
    one_hot,
    triple_point,
)
from mlabel.potentials import Envelope, Euclidean, RegularizerSpec, exact_embedding, linear, potts
from mlabel.solvers import SaddleProblem, SolverConfig, primal_objective, solve_douglas_rachford


def test_l1_data_term_color_and_gray():
    img = np.array([[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]])
    labels = LabelSet([[1, 0, 0], [0, 0, 1]])
    np.testing.assert_allclose(build_l1_data_term(img, labels), [[0, 2], [2, 0]])
    gray = LabelSet([0.0, 1.0])
    assert gray.prototypes.shape == (2, 1)
    np.testing.assert_allclose(build_l1_data_term(np.array([[0.25, 1.0]]), gray), [[0.25, 0.75], [1.0, 0.0]])
    with pytest.raises(ValueError):
        build_l1_data_term(img, LabelSet([[0, 0], [1, 1]]))
    with pytest.raises(ValueError):
        LabelSet([[0.5]])


def test_collapse_zero_distance_classes():
    D = np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0]], dtype=float)
    s = np.array([[0.3, 0.1, 0.9], [0.5, 0.7, 0.0]])
    s_red, m, cmap = collapse_zero_distance_classes(s, D)
    assert cmap.groups == [[0, 1], [2]]
    np.testing.assert_allclose(s_red, [[0.1, 0.9], [0.5, 0.0]])
    np.testing.assert_allclose(m.D, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(cmap.expand(np.array([0, 0]), s), [1, 0])
    assert cmap.l_original == 3


def test_collapse_without_zeros_is_identity(rng):
    s = rng.standard_normal((4, 3))
    s_red, m, cmap = collapse_zero_distance_classes(s, potts(3).D)
    np.testing.assert_array_equal(s_red, s)
    assert cmap.groups == [[0], [1], [2]]
    np.testing.assert_array_equal(ClassMap(cmap.groups).expand(np.array([2, 0, 1, 1]), s), [2, 0, 1, 1])


def test_one_hot_and_first_max():
    np.testing.assert_array_equal(one_hot(np.array([1, 0]), 3), [[0, 1, 0], [1, 0, 0]])
    u = np.array([[0.4, 0.4, 0.2], [0.1, 0.2, 0.7]])
    np.testing.assert_array_equal(binarize_first_max(u), [0, 2])


def test_psi_nearest_reduces_to_first_max_for_potts(rng):
    # for Potts the embedding distance to a vertex is monotone in u_i
    p = random_potts_problem(rng, (3, 3), 4)
    u = p.project_C(rng.standard_normal((9, 4)))
    np.testing.assert_array_equal(binarize_psi_nearest(u, p), binarize_first_max(u))


def test_psi_nearest_linear_prefers_middle_label():
    grid = Grid((1,))
    reg = RegularizerSpec(Euclidean(exact_embedding("linear", 3)))
    p = SaddleProblem(grid, np.zeros((1, 3)), reg)
    u = np.array([[0.45, 0.1, 0.45]])
    assert binarize_psi_nearest(u, p)[0] == 1
    assert binarize_first_max(u)[0] == 0


def test_psi_nearest_envelope_is_earth_mover_nearest_on_a_line(rng):
    # with d = 1 and the linear metric the envelope integrand is the
    # 1-D transport distance: the l1 distance between cumulative sums
    l = 4
    u = rng.dirichlet(np.ones(l), size=30)
    grid = Grid((30,))
    pv = SaddleProblem(grid, np.zeros((30, l)), RegularizerSpec(Envelope(linear(l))))
    cdf = np.cumsum(u, axis=1)
    w1 = np.stack([np.abs(cdf - np.cumsum(np.eye(l)[i])).sum(axis=1) for i in range(l)], axis=1)
    srt = np.sort(w1, axis=1)
    clear = srt[:, 1] - srt[:, 0] > 1e-3
    np.testing.assert_array_equal(binarize_psi_nearest(u, pv)[clear], np.argmin(w1, axis=1)[clear])


def test_binarization_bound_certifies(rng):
    p = random_potts_problem(rng, (5, 5), 3, scale=0.5)
    rep = solve_douglas_rachford(p, SolverConfig(max_iter=2000, rel_gap_tol=1e-8))
    lab = binarize_psi_nearest(rep.u, p)
    br = binarization_bound(lab, rep.u, rep.v, p, "psi")
    assert br.exact
    assert br.energy_binary == pytest.approx(primal_objective(one_hot(lab, 3), p))
    assert br.energy_binary >= br.dual - 1e-9
    assert br.suboptimality_bound >= -1e-9
    assert set(br.to_json()) == {"method", "energy_relaxed", "energy_binary", "dual", "suboptimality_bound", "exact"}


@pytest.mark.parametrize("kind", sorted(BENCHMARKS))
def test_benchmarks_are_deterministic(kind):
    a = generate_benchmark(kind, 16, seed=4)
    b = generate_benchmark(kind, 16, seed=4)
    np.testing.assert_array_equal(a.image, b.image)
    assert a.truth.shape == (16, 16)
    assert a.data_term().shape == (256, a.labels.l)
    assert a.truth.max() < a.labels.l


def test_benchmark_errors():
    with pytest.raises(ValueError):
        generate_benchmark("nope", 16)
    with pytest.raises(ValueError):
        four_colors(4)


def test_four_colors_has_all_classes_at_every_size():
    for size in (16, 32, 64):
        assert set(np.unique(four_colors(size, sigma=0).truth)) == {0, 1, 2, 3}


def test_triple_point_mask_and_inverse():
    tp = triple_point(16)
    inv = triple_point(16, inverse=True)
    assert tp.mask.sum() == 64
    s, si = tp.data_term(), inv.data_term()
    np.testing.assert_array_equal(s[tp.mask.ravel()], 0)
    np.testing.assert_allclose(si, -s)
    assert set(np.unique(tp.truth)) == {0, 1, 2}


def test_three_way_zero_clique_merges_to_one(rng):
    D = np.array([[0, 0, 0, 1], [0, 0, 0, 1], [0, 0, 0, 1], [1, 1, 1, 0]], dtype=float)
    s = rng.standard_normal((5, 4))
    s_red, m, cmap = collapse_zero_distance_classes(s, D)
    assert cmap.groups == [[0, 1, 2], [3]]
    np.testing.assert_array_equal(s_red[:, 0], s[:, :3].min(axis=1))


@pytest.mark.parametrize("delta", [0.01, 0.2])
def test_binarization_hand_cases(delta):
    u = np.array([[1 / 3 + delta, 1 / 3, 1 / 3 - delta]])
    grid = Grid((1,))
    pp = SaddleProblem(grid, np.zeros((1, 3)), RegularizerSpec(Euclidean(exact_embedding("potts", 3))))
    pl = SaddleProblem(grid, np.zeros((1, 3)), RegularizerSpec(Euclidean(exact_embedding("linear", 3))))
    assert binarize_psi_nearest(u, pp)[0] == 0
    assert binarize_first_max(u)[0] == 0
    assert binarize_psi_nearest(u, pl)[0] == 1


def test_psi_nearest_equals_first_max_for_potts_on_many_points(rng):
    u = rng.dirichlet(np.ones(4), size=10**4)
    p = SaddleProblem(Grid((10**4,)), np.zeros((10**4, 4)), RegularizerSpec(Euclidean(exact_embedding("potts", 4))))
    np.testing.assert_array_equal(binarize_psi_nearest(u, p), binarize_first_max(u))


def test_psi_bound_not_worse_than_first_max_potts_32():
    bench = four_colors(32, sigma=0.5, seed=2)
    p = SaddleProblem(bench.grid, bench.data_term(), RegularizerSpec(Euclidean(exact_embedding("potts", 4)), 0.5))
    rep = solve_douglas_rachford(p, SolverConfig(max_iter=3000, rel_gap_tol=1e-4))
    a = binarization_bound(binarize_psi_nearest(rep.u, p), rep.u, rep.v, p).suboptimality_bound
    b = binarization_bound(binarize_first_max(rep.u), rep.u, rep.v, p).suboptimality_bound
    assert a <= b + 1e-12
