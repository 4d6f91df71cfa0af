import math

import numpy as np
import pytest

from flexmatch.errors import InvalidParamsError, ProbabilityOverflowError
from flexmatch.graphs import (
    BipartiteGraph,
    FlexAllocation,
    ModelParams,
    RngSeed,
    Variant,
    additive_table,
    right_size,
    sample_base_graph,
    sample_dense_reference,
    sample_graph,
    sample_imbalanced_graph,
    sample_local_graph,
    sample_spatial_graph,
    sample_weighted_graph,
    spatial_distance,
)


def _rows_sorted(g):
    for i in range(g.n_left):
        row = g.neighbors(i)
        assert np.all(np.diff(row) > 0)
        assert row.size == 0 or (row[0] >= 0 and row[-1] < g.n_right)


@pytest.mark.parametrize("variant", [v.value for v in Variant])
def test_generators_are_deterministic_and_well_formed(variant):
    params = ModelParams(0.4, 1.5, 60, k=3, lam=0.7)
    alloc = FlexAllocation(0.3, 0.5)
    g1 = sample_graph(variant, params, alloc, RngSeed(11, 4))
    g2 = sample_graph(variant, params, alloc, RngSeed(11, 4))
    g3 = sample_graph(variant, params, alloc, RngSeed(11, 5))
    assert g1.same_as(g2)
    assert not g1.same_as(g3)
    _rows_sorted(g1)
    assert (g1.weights is not None) == (variant == "weighted")
    assert (g1.positions_left is not None) == (variant == "spatial")


def test_no_edges_when_everything_regular_and_alpha_zero():
    g = sample_base_graph(ModelParams(0.0, 1.0, 50), FlexAllocation(0, 0), 3)
    assert g.num_edges == 0
    assert not g.flex_left.any() and not g.flex_right.any()


def test_edge_law_table():
    t = additive_table(0.01, 0.03)
    assert t[0, 0] == pytest.approx(0.02)
    assert t[1, 0] == t[0, 1] == pytest.approx(0.04)
    assert t[1, 1] == pytest.approx(0.06)


def test_parameter_errors():
    with pytest.raises(ProbabilityOverflowError):
        sample_base_graph(ModelParams(0.5, 6.0, 10), FlexAllocation(0.5, 0.5), 0)
    with pytest.raises(InvalidParamsError):
        sample_base_graph(ModelParams(2.0, 2.0, 100), FlexAllocation(0.5, 0.5), 0)
    with pytest.raises(InvalidParamsError):
        sample_local_graph(ModelParams(0.2, 1.2, 10, k=2), FlexAllocation(0.5, 0.5), 0)
    with pytest.raises(InvalidParamsError):
        FlexAllocation(1.2, 0.0)
    with pytest.raises(InvalidParamsError):
        sample_imbalanced_graph(ModelParams(0.1, 1.0, 10, lam=1.5), FlexAllocation(0.5, 0.5), 0)


def test_near_homogeneous_law_ignores_allocation():
    eps = 1e-9
    params = ModelParams(1.0 - eps, 1.0, 200)
    means = []
    for alloc in (FlexAllocation(1, 0), FlexAllocation(0.5, 0.5)):
        counts = [sample_base_graph(params, alloc, RngSeed(2, s)).num_edges for s in range(300)]
        means.append(np.mean(counts))
    for m in means:
        assert abs(m - 400) < 4 * math.sqrt(400 / 300)


def test_edge_count_mean_matches_formula_small():
    params = ModelParams(0.5, 2.0, 100)
    for alloc in (FlexAllocation(1, 0), FlexAllocation(0.5, 0.5), FlexAllocation(0.2, 0.3)):
        counts = np.array([sample_base_graph(params, alloc, RngSeed(9, s)).num_edges for s in range(2000)])
        expected = 100**2 * (2 * 0.005 + alloc.B * (0.02 - 0.005))
        se = counts.std(ddof=1) / math.sqrt(len(counts))
        assert abs(counts.mean() - expected) < 4 * se


def test_sparse_sampler_agrees_with_dense_reference():
    params = ModelParams(0.3, 2.5, 80)
    alloc = FlexAllocation(0.4, 0.35)
    reps = 1500

    def stats(sampler):
        out = np.empty((reps, 3))
        for s in range(reps):
            g = sampler(params, alloc, RngSeed(5, s))
            e = g.edges()
            fl = g.flex_left[e[:, 0]].astype(int)
            fr = g.flex_right[e[:, 1]].astype(int)
            out[s] = [np.sum(fl + fr == 0), np.sum(fl + fr == 1), np.sum(fl + fr == 2)]
        return out.mean(0), out.std(0, ddof=1) / math.sqrt(reps)

    m1, s1 = stats(sample_base_graph)
    m2, s2 = stats(sample_dense_reference)
    assert np.all(np.abs(m1 - m2) < 4 * np.hypot(s1, s2))


def test_local_window_and_forced_example():
    params = ModelParams(0.0, 0.5, 4, k=1)
    g = sample_local_graph(params, FlexAllocation(1, 1), 7)
    assert g.adjacency() == [[0], [1], [2], [3]]
    params = ModelParams(0.3, 0.9, 4, k=2)
    for s in range(50):
        g = sample_local_graph(params, FlexAllocation(0.5, 0.5), s)
        for i, row in enumerate(g.adjacency()):
            assert set(row) <= {i, (i + 1) % 4}


def test_local_dense_reference_window():
    params = ModelParams(0.3, 0.9, 30, k=3)
    for s in range(20):
        g = sample_dense_reference(params, FlexAllocation(0.5, 0.5), s, "local")
        for i, row in enumerate(g.adjacency()):
            assert all((j - i) % 30 <= 2 for j in row)


def test_spatial_predicate_holds_exactly():
    params = ModelParams(0.2, 0.9, 64)
    g = sample_spatial_graph(params, FlexAllocation(0.5, 0.5), 3)
    radii = additive_table(0.2 / 8, 0.9 / 8)
    present = {tuple(e) for e in g.edges().tolist()}
    for i in range(64):
        for j in range(64):
            d = spatial_distance(g.positions_left[i], g.positions_right[j])
            inside = d <= radii[int(g.flex_left[i]), int(g.flex_right[j])]
            assert inside == ((i, j) in present)


def test_spatial_zero_radius_has_no_regular_edges():
    g = sample_spatial_graph(ModelParams(0.0, 0.5, 50), FlexAllocation(0, 0), 1)
    assert g.num_edges == 0


def test_imbalanced_right_side_size():
    assert right_size(100, 0.8) == 80
    assert right_size(5, 0.5) == 2  # round half to even
    g = sample_imbalanced_graph(ModelParams(0.2, 1.0, 100, lam=0.8), FlexAllocation(0.5, 0.5), 1)
    assert g.n_left == 100 and g.n_right == 80


def test_imbalanced_lambda_one_matches_base_in_distribution():
    p_base = ModelParams(0.4, 1.8, 60)
    p_imb = ModelParams(0.4, 1.8, 60, lam=1.0)
    alloc = FlexAllocation(0.6, 0.2)
    a = np.array([sample_base_graph(p_base, alloc, RngSeed(1, s)).num_edges for s in range(2000)])
    b = np.array([sample_imbalanced_graph(p_imb, alloc, RngSeed(2, s)).num_edges for s in range(2000)])
    se = math.hypot(a.std(ddof=1), b.std(ddof=1)) / math.sqrt(2000)
    assert abs(a.mean() - b.mean()) < 4 * se


def test_weighted_thresholds():
    params = ModelParams(0.0, 2.0, 100)
    g = sample_weighted_graph(params, FlexAllocation(0, 0), 5)
    assert g.num_edges == 0
    params = ModelParams(0.3, 2.0, 100)
    g = sample_weighted_graph(params, FlexAllocation(0.5, 0.5), 5)
    table = additive_table(0.003, 0.02)
    e = g.edges()
    thr = 1 - table[g.flex_left[e[:, 0]].astype(int), g.flex_right[e[:, 1]].astype(int)]
    utility = g.weights + 0.8
    assert np.all(utility > thr) and np.all(utility <= 1.0)


def test_weighted_flexible_pair_eligibility_rate():
    params = ModelParams(0.1, 2.0, 50)
    counts = [sample_weighted_graph(params, FlexAllocation(1, 1), RngSeed(3, s)).num_edges for s in range(2000)]
    expected = 50 * 50 * 2 * 2.0 / 50
    assert abs(np.mean(counts) - expected) < 4 * np.std(counts) / math.sqrt(2000)


def test_json_round_trip():
    for variant in ("base", "weighted", "spatial"):
        g = sample_graph(variant, ModelParams(0.2, 1.5, 20), FlexAllocation(0.5, 0.5), 2)
        h = BipartiteGraph.from_json(g.to_json())
        assert h.same_as(g)


def test_from_edges_dedupes_and_sorts():
    g = BipartiteGraph.from_edges(2, 3, [(1, 2), (0, 1), (1, 0), (0, 1)])
    assert g.adjacency() == [[1], [0, 2]]
    with pytest.raises(InvalidParamsError):
        BipartiteGraph.from_dict({"n_left": 1, "n_right": 2, "flex_left": [0], "flex_right": [0, 0],
                                  "adjacency": [[1, 0]]})
