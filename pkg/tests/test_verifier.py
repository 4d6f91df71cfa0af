import math

import numpy as np
import pytest

from flexmatch.graphs import BipartiteGraph, FlexAllocation
from flexmatch.ks_solver import directional_sod_balanced, f1_prime, mu_ks, sod_budget_formula, solve_reduced_balanced
from flexmatch.matching import max_matching_size
from flexmatch.verifier import (
    CouplingSets,
    Verdict,
    cell_inside,
    certify_comparison_cell,
    certify_comparison_region,
    certify_sod_cell,
    concave_enclosures,
    coupled_graphs,
    coupling_difference,
    coupling_inequality_check,
    exhaustive_coupling_sets,
    f1_derivative_lower_bound,
    grid_anchors,
    in_sod_region,
    sample_coupling_sets,
    solution_bounds,
    verify_f1_monotonicity_cell,
)
from oracles import brute_max_matching


def pointwise_gap(alpha, alpha_f):
    return mu_ks(alpha, alpha_f, FlexAllocation(1, 0)) - mu_ks(alpha, alpha_f, FlexAllocation(0.5, 0.5))


def test_grid_anchors():
    assert grid_anchors(0.0, 0.05, 0.01) == [0.0, 0.01, 0.02, 0.03, 0.04, 0.05]
    assert grid_anchors(0.0, 0.05, 0.01, open_low=True)[0] == 0.01
    assert grid_anchors(1.0, 0.5, 0.01) == []
    a = grid_anchors(1.0, 2.0, 0.001)
    assert len(a) == 1001 and a[-1] == 2.0 and a[337] == 1.337


@pytest.mark.parametrize("alpha,alpha_f", [(0.05, 1.2), (0.2, 1.5), (0.4, 1.9)])
def test_comparison_certificate_is_sound(alpha, alpha_f):
    delta = 0.001
    cert = certify_comparison_cell(alpha, alpha_f, delta)
    assert cert.verdict is Verdict.VERIFIED
    rng = np.random.default_rng(0)
    for s, t in rng.uniform(0, delta, (6, 2)):
        assert pointwise_gap(alpha + s, alpha_f + t) >= cert.lower_bound_gap


def test_comparison_out_of_regime():
    assert certify_comparison_cell(0.5, 2.3, 0.01).verdict is Verdict.OUT_OF_REGIME
    assert certify_comparison_cell(5e-5, 1.0, 0.01).verdict is Verdict.OUT_OF_REGIME
    assert certify_comparison_cell(0.5, 0.4, 0.01).verdict is Verdict.OUT_OF_REGIME
    row = certify_comparison_cell(0.5, 0.4, 0.01).to_row()
    assert row["verdict"] == "out_of_regime" and math.isnan(row["lower_bound_gap"])


def test_coarse_cells_lose_margin():
    # the same parameters certify with fine cells but not with coarse ones
    assert certify_comparison_cell(0.5, 2.0, 0.001).verdict is Verdict.VERIFIED
    assert certify_comparison_cell(0.5, 2.0, 0.01).verdict is Verdict.UNVERIFIED


def test_region_summary_and_empty_region():
    s = certify_comparison_region(0.01, alpha_range=(0.0, 0.05), alpha_f_range=(1.0, 1.03))
    assert len(s.cells) == 5 * 4
    assert 0 <= s.verified_fraction <= 1
    empty = certify_comparison_region(0.01, alpha_range=(1.0, 0.5), alpha_f_range=(1.0, 2.0))
    assert empty.cells == [] and math.isnan(empty.verified_fraction)


@pytest.mark.parametrize("alpha,alpha_f", [(0.1, 1.0), (0.3, 1.5), (0.5, 1.6)])
def test_sod_certificate_is_sound(alpha, alpha_f):
    delta = 0.002
    cert = certify_sod_cell(alpha, alpha_f, delta)
    assert cert.in_regime and cert.convex_verified and cert.concave_verified
    for s, t in [(0, 0), (delta * 0.999, 0), (0, delta * 0.999), (delta / 2, delta / 3)]:
        diag, budget = directional_sod_balanced(alpha + s, alpha_f + t, 1e-12)
        assert cert.convex_lb <= diag
        assert cert.concave_ub_sound >= budget


def test_displayed_concave_bound_is_not_an_upper_bound():
    # numerator positive, denominator negative: maximising the numerator
    # pushes the quotient down, so only its sign survives
    cert = certify_sod_cell(0.3, 1.5, 0.002)
    _, budget = directional_sod_balanced(0.3, 1.5, 1e-12)
    assert cert.concave_ub < budget < 0
    assert cert.concave_ub_sound >= budget


def test_concave_enclosures_contain_pointwise_values():
    rng = np.random.default_rng(4)
    delta = 0.01
    for alpha, alpha_f in [(0.05, 0.8), (0.3, 1.5), (0.6, 1.7)]:
        b = solution_bounds(alpha, alpha_f, delta, 1e-12, need_one_sided=False)
        num_lo, num_hi, den_lo, den_hi = concave_enclosures(alpha, alpha_f, delta, b)
        for s, t in rng.uniform(0, delta, (5, 2)):
            r = solve_reduced_balanced(alpha + s, alpha_f + t, 1e-12)
            x1, x2, a, af = r.x1, r.x2, alpha + s, alpha_f + t
            q = x1 * x2 * (af - a) ** 2
            den = -q * q + 8 * x1 * x2 * (af + a) ** 2 + 16 * (a**2 * x2**2 + af**2 * x1**2 - 1)
            num = sod_budget_formula(x1, x2, a, af) * den
            assert num_lo <= num <= num_hi
            assert den_lo <= den <= den_hi


def test_sod_certificate_at_coarse_cells():
    # near the edge of the region the curvature along (0, 1) is small and
    # a 0.01 cell is too wide to certify it
    assert not certify_sod_cell(0.41, 0.71, 0.01).concave_verified
    assert certify_sod_cell(0.41, 0.71, 0.002).concave_verified


def test_sod_region_predicate():
    assert in_sod_region(0.3, 1.5)
    assert not in_sod_region(1.0, 1.5)
    assert cell_inside(in_sod_region, 0.3, 1.5, 0.01)
    assert not cell_inside(in_sod_region, 0.9, 1.5, 0.1)


def test_f1_bound_is_below_derivative():
    rng = np.random.default_rng(3)
    d1, d2 = 0.01, 0.01
    for _ in range(200):
        af = rng.uniform(0.1, 2.5)
        a = rng.uniform(1e-4, min(af, math.e - af) - d1)
        x1 = rng.uniform(d2, 1 - d2)
        lb = f1_derivative_lower_bound(a, af, x1, d1, d2)
        for s, t, u in rng.uniform(0, 1, (3, 3)):
            assert f1_prime(x1 + u * d2, a + s * d1, af + t * d1) >= lb - 1e-12
    assert verify_f1_monotonicity_cell(0.2, 1.5, 0.5, d1, d2)


# ---------------------------------------------------------------------------
# coupling
# ---------------------------------------------------------------------------


def test_coupled_graph_construction():
    n = 4
    blocks = np.zeros((4, 2, 2), dtype=bool)
    blocks[0, 0, 1] = True  # X1: l0 - r1
    blocks[2, 1, 0] = True  # X3: l3 - r0
    blocks[3, 0, 0] = True  # X4: l0 - r2
    A, B, C, D = coupled_graphs(CouplingSets(*blocks), n)
    assert sorted(map(tuple, A.edges())) == [(0, 1), (0, 2), (3, 0)]
    assert sorted(map(tuple, B.edges())) == [(0, 1), (0, 3), (3, 1)]
    assert sorted(map(tuple, C.edges())) == [(0, 2), (3, 0), (3, 2)]
    assert sorted(map(tuple, D.edges())) == [(0, 3), (3, 1), (3, 2)]


def test_exhaustive_small_case_against_brute_force():
    count = 0
    for sets in exhaustive_coupling_sets(4, 2):
        count += 1
        assert coupling_difference(sets, 4, brute_max_matching) >= 0
        assert coupling_difference(sets, 4) == coupling_difference(sets, 4, brute_max_matching)
    assert count == 1 + 16 + 120


def test_coupling_report_deterministic_and_thread_invariant():
    r1 = coupling_inequality_check(40, 2.0, seed=5, replicates=60)
    r2 = coupling_inequality_check(40, 2.0, seed=5, replicates=60, threads=3)
    assert r1 == r2
    assert r1.violations == 0 and r1.mean_gap_per_node >= 0


def test_coupling_detects_faulty_matcher():
    def bad(g: BipartiteGraph) -> int:
        return g.num_edges % 3

    r = coupling_inequality_check(20, 2.0, seed=0, replicates=30, matcher=bad)
    assert r.violations > 0 and r.max_violation > 0


def test_sampled_sets_use_edge_rate():
    s = sample_coupling_sets(200, 2.0, 11)
    total = sum(int(b.sum()) for b in (s.x1, s.x2, s.x3, s.x4))
    expected = 4 * 100 * 100 * 2.0 / 200
    assert abs(total - expected) < 4 * math.sqrt(expected)
