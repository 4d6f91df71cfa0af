"""End-to-end acceptance checks, one group per criterion.

Run with ``pytest -v``; the terminal summary prints one line per criterion.
Literal claims that do not hold are kept as strict xfails next to the
checks that do pass.
"""

import io
import math

import numpy as np
import pytest

from acceptance_log import note
from flexmatch import cli
from flexmatch.analytic import (
    Optimal,
    alpha_star,
    asymmetry_thresholds,
    cannibalization_gap_bound,
    local_model_mu,
    phi_closed_form,
    phi_optimal_allocation,
)
from flexmatch.estimator import EstimateRequest, compare_allocations, estimate, heatmap_grid, heatmap_ratio
from flexmatch.experiment import ProfitSpec, balanced_vs_global, run_trajectory
from flexmatch.graphs import FlexAllocation, ModelParams, RngSeed, sample_graph
from flexmatch.ks_solver import directional_sod_balanced, finite_difference_sod, mu_ks
from flexmatch.matching import max_matching, max_weight_matching
from flexmatch.verifier import (
    Verdict,
    cell_inside,
    certify_comparison_region,
    certify_sod_region,
    coupling_difference,
    coupling_inequality_check,
    exhaustive_coupling_sets,
    in_sod_region,
)
from oracles import all_matchings, random_small_graph

HALF_E = math.e / 2


# ---------------------------------------------------------------------------
# 1. matching oracles
# ---------------------------------------------------------------------------


def test_criterion_01_matching_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        g = random_small_graph(rng, weighted=True)
        w = {(i, j): x for (i, j), x in zip(g.edges().tolist(), g.weights.tolist())}
        best_size, best_weight = 0, 0.0
        for m in all_matchings(g.adjacency()):
            best_size = max(best_size, len(m))
            best_weight = max(best_weight, math.fsum(w[e] for e in m))
        mm = max_matching(g)
        mw = max_weight_matching(g)
        assert mm.is_valid_for(g) and mw.is_valid_for(g)
        assert mm.size == best_size
        # fsum is correctly rounded, so equal edge sets give equal totals
        assert math.fsum(w[e] for e in mw.as_set()) == best_weight
    note(1, "500 graphs, cardinality and weight optima equal exhaustive enumeration")


# ---------------------------------------------------------------------------
# 2. edge counts
# ---------------------------------------------------------------------------


def test_criterion_02_edge_count_invariance():
    params, R = ModelParams(0.5, 2.0, 100), 10_000
    stats = {}
    for alloc in (FlexAllocation(1, 0), FlexAllocation(0.5, 0.5), FlexAllocation(0, 1)):
        counts = np.array([sample_graph("base", params, alloc, RngSeed(2, r)).num_edges for r in range(R)], dtype=float)
        stats[(alloc.b_l, alloc.b_r)] = (counts.mean(), counts.std(ddof=1) / math.sqrt(R))
    for (m, se) in stats.values():
        assert abs(m - 250) <= 4 * se
    keys = list(stats)
    for i in range(3):
        for j in range(i + 1, 3):
            (m1, s1), (m2, s2) = stats[keys[i]], stats[keys[j]]
            assert abs(m1 - m2) <= 4 * math.hypot(s1, s2)
    note(2, "; ".join(f"{k}: {m:.2f} +- {se:.2f}" for k, (m, se) in stats.items()))


# ---------------------------------------------------------------------------
# 3. phi classifier
# ---------------------------------------------------------------------------


def test_criterion_03_phi_classifier():
    gaps = np.linspace(0.05, 5.0, 50)
    alphas = np.linspace(0.0, 2.5, 50)
    cases = 0
    for B in np.round(np.arange(1, 11) / 10, 10):
        shares = np.linspace(0.0, B, 101)
        for gap in gaps:
            for a in alphas:
                af = a + gap
                vals = [phi_closed_form(a, af, FlexAllocation(s, B - s)).phi for s in shares]
                best = max(vals)
                one, bal = vals[-1], vals[50]
                pred = phi_optimal_allocation(a, af, B)
                cand = {Optimal.ONE_SIDED: [one], Optimal.BALANCED: [bal], Optimal.TIE: [one, bal]}[pred]
                assert any(abs(best - v) <= 1e-9 for v in cand), (a, af, B, pred)
                cases += 1
    note(3, f"{cases} cases over gap in [0.05, 5], alpha in [0, 2.5], B in 0.1..1.0")


# ---------------------------------------------------------------------------
# 4. phi closed form vs simulation
# ---------------------------------------------------------------------------


def test_criterion_04_phi_closed_form_vs_simulation():
    worst = 0.0
    for a in (0.0, 0.25, 0.5, 0.75, 1.0):
        for gap in (0.5, 1.0, 1.5, 2.5, 4.0):
            for alloc in (FlexAllocation(1, 0), FlexAllocation(0.5, 0.5), FlexAllocation(0.2, 0.6)):
                est = estimate(EstimateRequest("base", ModelParams(a, a + gap, 2000), alloc, 2000, ("phi",), 4))
                exact = phi_closed_form(a, a + gap, alloc).phi
                z = abs(est.mean("phi") - exact) / est.std_err("phi")
                worst = max(worst, z)
                assert z <= 4, (a, a + gap, alloc, est.mean("phi"), exact)
    note(4, f"75 cells, largest |error| / SE = {worst:.2f}")


# ---------------------------------------------------------------------------
# 5. KS surrogate convergence
# ---------------------------------------------------------------------------

KS_SETS = [(0.2, 1.5, FlexAllocation(1, 0)), (0.3, 1.0, FlexAllocation(0.3, 0.7)), (0.1, 2.5, FlexAllocation(0.6, 0))]


@pytest.mark.parametrize("alpha,alpha_f,alloc", KS_SETS)
def test_criterion_05_ks_convergence(alpha, alpha_f, alloc):
    ks = mu_ks(alpha, alpha_f, alloc)
    errs, ses = [], []
    for n in (50, 100, 200, 400, 800):
        est = estimate(EstimateRequest("base", ModelParams(alpha, alpha_f, n), alloc, 20_000, ("mu",), 3))
        m = est.mean("mu")
        errs.append(abs(ks - m) / m)
        ses.append(ks * est.std_err("mu") / m**2)
    ups = [i for i in range(4) if errs[i + 1] > errs[i]]
    assert len(ups) <= 1
    for i in ups:
        assert errs[i + 1] - errs[i] <= 2 * math.hypot(ses[i], ses[i + 1])
    assert errs[-1] < 0.02
    note(5, f"({alpha}, {alpha_f}, {alloc.b_l, alloc.b_r}): rel. errors " + ", ".join(f"{e:.4f}" for e in errs))


# ---------------------------------------------------------------------------
# 6. cannibalization
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("alpha_f", [1.0, 2.0, 3.0])
def test_criterion_06_cannibalization(alpha_f):
    c = compare_allocations("base", ModelParams(0.0, alpha_f, 500), FlexAllocation(1, 0), FlexAllocation(0.5, 0.5), "mu", 5000, 6)
    bound = cannibalization_gap_bound(alpha_f)
    assert c.diff > max(0.0, bound - 4 * c.diff_se)
    note(6, f"alpha_f={alpha_f}: gap {c.diff:.4f} +- {c.diff_se:.4f}, bound {bound:.2e}")


# ---------------------------------------------------------------------------
# 7. coupling inequality
# ---------------------------------------------------------------------------


def test_criterion_07_coupling():
    rep = coupling_inequality_check(200, 2.0, seed=7, replicates=10_000)
    assert rep.violations == 0
    total = viol = 0
    for sets in exhaustive_coupling_sets(6, 2):
        total += 1
        viol += coupling_difference(sets, 6) < 0
    assert total == 667 and viol == 0
    note(7, f"10^4 sampled replicates and {total} exhaustive configurations, no violations")


# ---------------------------------------------------------------------------
# 8. asymmetry thresholds
# ---------------------------------------------------------------------------


def test_criterion_08_asymmetry():
    B, a = 0.6, 0.05
    a_star, af_star = asymmetry_thresholds(B, a)
    assert a_star == pytest.approx(alpha_star(B)) and a < a_star
    assert af_star == pytest.approx(13.2686628172447, rel=1e-12)
    af = 1.1 * af_star
    c = compare_allocations("base", ModelParams(a, af, 1000), FlexAllocation(0.3, 0.3), FlexAllocation(0.6, 0), "mu", 3000, 8)
    assert c.z > 3
    note(8, f"alpha_f = {af:.4f}: balanced - one-sided = {c.diff:.4f}, z = {c.z:.1f}")


# ---------------------------------------------------------------------------
# 9. comparison certificates
# ---------------------------------------------------------------------------


def _comparison_targets(delta):
    summ = certify_comparison_region(delta, 1e-8, (1e-4, 0.5), (1.0, 2.0))
    return [c for c in summ.cells if c.verdict is not Verdict.OUT_OF_REGIME and c.alpha < 0.77 * c.alpha_f - 0.16]


@pytest.mark.xfail(strict=True, reason="cell widening costs about 4*delta of margin, more than the gap; see ledger")
def test_criterion_09_literal_delta_0_01():
    cells = _comparison_targets(0.01)
    bad = sum(c.verdict is Verdict.UNVERIFIED for c in cells)
    note(9, f"delta=0.01: {bad} of {len(cells)} target cells unverified")
    assert bad == 0


def test_criterion_09_delta_0_001():
    cells = _comparison_targets(0.001)
    assert cells and all(c.verdict is Verdict.VERIFIED for c in cells)
    note(9, f"delta=0.001: all {len(cells)} target cells verified, min margin {min(c.lower_bound_gap for c in cells):.4f}")


# ---------------------------------------------------------------------------
# 10. curvature certificates
# ---------------------------------------------------------------------------

SOD_BOX = dict(alpha_range=(1e-4, 0.85), alpha_f_range=(0.0, 2.72))


def _interior(delta):
    certs = certify_sod_region(delta, 1e-8, **SOD_BOX)
    return [c for c in certs if c.in_regime and cell_inside(in_sod_region, c.alpha, c.alpha_f, delta)]


@pytest.mark.xfail(strict=True, reason="both sign checks need cells finer than 0.01 near the region edge; see ledger")
def test_criterion_10_literal_delta_0_01():
    cells = _interior(0.01)
    cx = sum(not c.convex_verified for c in cells)
    cc = sum(not c.concave_verified for c in cells)
    note(10, f"delta=0.01: {len(cells)} interior cells, {cx} convexity and {cc} concavity unverified")
    assert cx == 0 and cc == 0


def test_criterion_10_delta_0_001():
    cells = _interior(0.001)
    assert cells and all(c.convex_verified and c.concave_verified for c in cells)
    note(10, f"delta=0.001: all {len(cells)} interior cells verified convex and concave")


SOD_ANCHORS = [(0.02, 0.5), (0.05, 1.0), (0.1, 0.8), (0.2, 1.2), (0.3, 1.5), (0.4, 1.8), (0.5, 1.6), (0.6, 1.7), (0.15, 2.2), (0.1, 2.4)]


def test_criterion_10_exact_sod_vs_finite_differences():
    center = FlexAllocation(0.5, 0.5)
    worst = 0.0
    for a, af in SOD_ANCHORS:
        assert in_sod_region(a, af)
        diag, budget = directional_sod_balanced(a, af, 1e-13)
        fd_diag = finite_difference_sod(a, af, center, (1, -1), 1e-3, "mu")
        fd_budget = finite_difference_sod(a, af, center, (0, 1), 1e-3, "xi")
        for exact, fd in ((diag, fd_diag), (budget, fd_budget)):
            rel = abs(exact - fd) / abs(exact)
            worst = max(worst, rel)
            assert rel <= 1e-3, (a, af, exact, fd)
        assert diag > 0 > budget
    note(10, f"10 anchors, largest relative SOD difference {worst:.1e}")


# ---------------------------------------------------------------------------
# 11. local model
# ---------------------------------------------------------------------------


def test_criterion_11_local_model():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        pf = rng.uniform(0.05, 0.5)
        p = rng.uniform(0.0, pf)
        B = rng.uniform(0.1, 1.0)
        one, bal = FlexAllocation(B, 0.0), FlexAllocation(B / 2, B / 2)
        assert local_model_mu(p, pf, one) > local_model_mu(p, pf, bal)
        for alloc in (one, bal):
            est = estimate(EstimateRequest("local", ModelParams(2 * p, 2 * pf, 5000, k=2), alloc, 500, ("mu",), 11))
            z = abs(est.mean("mu") - local_model_mu(p, pf, alloc)) / est.std_err("mu")
            worst = max(worst, z)
            assert z <= 4
    note(11, f"20 parameter sets, one-sided ahead in all, largest |error| / SE = {worst:.2f}")


# ---------------------------------------------------------------------------
# 12. profit landscape and trajectories
# ---------------------------------------------------------------------------


def _balanced_like(t):
    bl, br = t.terminal
    return abs(bl - br) <= 0.1 and min(bl, br) >= 0.2


def _one_sided_like(t):
    bl, br = t.terminal
    return min(bl, br) <= 0.1 and max(bl, br) >= 0.3


def test_criterion_12_profit_ratios():
    r1 = balanced_vs_global(ProfitSpec(1e-6, HALF_E, 0.4), 201)
    r2 = balanced_vs_global(ProfitSpec(1e-6, 2 * math.e, 0.99), 201)
    assert r1.ratio == pytest.approx(0.73, abs=0.05)
    assert r2.ratio < 0.10
    note(12, f"ratios {r1.ratio:.4f} (target 0.73 +- 0.05) and {r2.ratio:.4f} (target < 0.10)")


@pytest.mark.xfail(strict=True, reason="coordinate walk with gamma=0.02 slides off the balanced saddle; see ledger")
def test_criterion_12_literal_small_step_balanced():
    t = run_trajectory(ProfitSpec(1e-6, HALF_E, 0.4), FlexAllocation(0, 0), 0.02, "coordinate")
    note(12, f"coordinate gamma=0.02 ends at {t.terminal}")
    assert _balanced_like(t)


def test_criterion_12_trajectories():
    spec = ProfitSpec(1e-6, HALF_E, 0.4)
    big = run_trajectory(spec, FlexAllocation(0, 0), 0.3, "coordinate")
    assert big.converged and _one_sided_like(big)
    sim = run_trajectory(spec, FlexAllocation(0, 0), 0.02, "simultaneous")
    assert sim.cycled and _balanced_like(sim)
    mid = run_trajectory(spec, FlexAllocation(0, 0), 0.05, "coordinate")
    assert mid.converged and _balanced_like(mid) and mid.terminal_class.value == "saddle_suspect"
    note(12, f"coordinate gamma=0.3 -> {big.terminal}; simultaneous gamma=0.02 cycles at {sim.terminal}; "
             f"coordinate gamma=0.05 -> {mid.terminal} ({mid.terminal_class.value})")


# ---------------------------------------------------------------------------
# 13. heatmap
# ---------------------------------------------------------------------------

HEAT_GRID = heatmap_grid([0.05, 0.2, 0.4, 0.6, 0.8, 1.0], [2, 5, 10, 20, 30, 40])


def _cells(rows):
    ratio = [r for r in rows if r["metric"] == "mu_ratio"]
    diff = [r for r in rows if r["metric"] == "mu_diff"]
    out = []
    for r, d in zip(ratio, diff):
        # both allocations can match every node in every replicate
        z = d["mean"] / d["std_err"] if d["std_err"] > 0 else math.copysign(math.inf, d["mean"]) if d["mean"] else 0.0
        out.append((r["alpha"], r["alpha_f"], r["mean"], z))
    return out


def test_criterion_13_heatmap_b1():
    cells = _cells(heatmap_ratio("base", HEAT_GRID, 1.0, "mu", 10_000, 13, 100))
    assert all(z <= 3 for *_, z in cells)
    note(13, f"B=1: largest ratio {max(c[2] for c in cells):.4f}, largest z {max(c[3] for c in cells):.1f}")


def test_criterion_13_heatmap_b06():
    cells = _cells(heatmap_ratio("base", HEAT_GRID, 0.6, "mu", 10_000, 13, 100))
    best = max(cells, key=lambda c: c[2])
    assert any(r >= 1.08 and z > 3 for _, _, r, z in cells)
    note(13, f"B=0.6: best ratio {best[2]:.4f} (z {best[3]:.0f}) at alpha={best[0]}, alpha_f={best[1]}")


# ---------------------------------------------------------------------------
# 14. determinism
# ---------------------------------------------------------------------------

DETERMINISM_RUNS = [
    ["simulate", "--alpha", "0.5", "--alpha-f", "2", "--n", "100", "--replicates", "300", "--B", "1", "--bl", "0.5",
     "--metric", "mu,phi,psi_naive,psi_prior,ks", "--seed", "14"],
    ["heatmap", "--n", "100", "--replicates", "300", "--alphas", "0.05,0.8", "--gaps", "2,20", "--B", "0.6", "--seed", "14"],
    ["sweep", "--variant", "local", "--k", "2", "--alpha", "0.2", "--alpha-f", "0.8", "--n", "500", "--replicates", "50",
     "--grid-points", "5", "--B", "0.8"],
    ["verify", "--delta", "0.01", "--alpha-min", "0.0", "--alpha-max", "0.5", "--alpha-f-min", "1.0", "--alpha-f-max", "1.2"],
    ["ks-sweep", "--B", "0.6,1", "--alphas", "0.05,0.2", "--gaps", "1,2"],
    ["landscape", "--alpha", "0", "--alpha-f", "1.36", "--c", "0.4", "--resolution", "11"],
]


def _csv(argv, threads):
    out = io.StringIO()
    assert cli.main(argv + ["--threads", str(threads)], out, io.StringIO()) == 0
    text = out.getvalue()
    return text[: text.rstrip("\n").rfind("\n") + 1].encode()  # drop the summary line


@pytest.mark.parametrize("argv", DETERMINISM_RUNS, ids=[a[0] for a in DETERMINISM_RUNS])
def test_criterion_14_determinism(argv):
    first = _csv(argv, 1)
    assert first.count(b"\n") > 1
    assert _csv(argv, 1) == first
    assert _csv(argv, 4) == first
    note(14, f"{argv[0]}: {len(first)} bytes identical across repeats and 1/4 threads")
