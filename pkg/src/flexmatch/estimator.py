"""Seeded Monte Carlo estimation of matching metrics.

Replicate ``r`` samples its graph from stream ``(master_seed, r)``; the
randomized matchers use streams ``(master_seed, tag << 56 | r)``.  Results
are stored by replicate index and reduced in index order, so the output
does not depend on the number of threads or on scheduling.

All metrics are counts divided by ``n`` (the left side size, also in the
imbalanced model).  ``phi`` is the smaller of the two side means of the
non-isolated fraction; ``phi_graph_min`` averages the per-graph minimum.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import InvalidParamsError
from .graphs import FlexAllocation, ModelParams, Variant, sample_graph
from .matching import (
    greedy_naive,
    greedy_prioritizing,
    karp_sipser,
    max_matching_size,
    max_weight_matching,
    non_isolated_counts,
)
from .output import ESTIMATE_COLUMNS, resolve_threads
from .rng import RngSeed

METRICS = ("mu", "phi", "phi_graph_min", "psi_naive", "psi_prior", "ks", "weight")

TAG_KS = 1
TAG_NAIVE = 2
TAG_PRIOR = 3


def heuristic_stream(master_seed: int, tag: int, replicate: int) -> RngSeed:
    return RngSeed(master_seed, (tag << 56) | replicate)


@dataclass(frozen=True)
class EstimateRequest:
    variant: Variant
    params: ModelParams
    alloc: FlexAllocation
    replicates: int
    metrics: tuple = ("mu",)
    master_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "metrics", tuple(dict.fromkeys(self.metrics)))

    def validate(self) -> None:
        if not isinstance(self.replicates, (int, np.integer)) or self.replicates < 1:
            raise InvalidParamsError("replicates must be a positive integer")
        if not self.metrics:
            raise InvalidParamsError("at least one metric is required")
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise InvalidParamsError(f"unknown metrics: {sorted(unknown)}")
        if "weight" in self.metrics and self.variant is not Variant.WEIGHTED:
            raise InvalidParamsError("metric 'weight' needs the weighted variant")
        self.params.validate(self.variant)
        RngSeed(self.master_seed)


@dataclass(frozen=True)
class MetricEstimate:
    mean: float
    std_err: float


@dataclass(frozen=True)
class Estimate:
    request: EstimateRequest
    values: dict
    replicates: int
    samples: Optional[dict] = field(default=None, repr=False, compare=False)

    def mean(self, metric: str) -> float:
        return self.values[metric].mean

    def std_err(self, metric: str) -> float:
        return self.values[metric].std_err

    def rows(self) -> list[dict]:
        q = self.request
        base = {
            "variant": q.variant.value,
            "alpha": q.params.alpha,
            "alpha_f": q.params.alpha_f,
            "B": q.alloc.B,
            "b_l": q.alloc.b_l,
            "b_r": q.alloc.b_r,
            "replicates": self.replicates,
            "seed": q.master_seed,
        }
        return [dict(base, metric=m, mean=v.mean, std_err=v.std_err) for m, v in self.values.items()]


def _raw_columns(metrics: Sequence[str]) -> list[str]:
    cols = []
    for m in metrics:
        cols += ["phi_left", "phi_right"] if m == "phi" else [m]
    return list(dict.fromkeys(cols))


def _replicate(req: EstimateRequest, cols: list[str], r: int) -> list[float]:
    n = req.params.n
    g = sample_graph(req.variant, req.params, req.alloc, RngSeed(req.master_seed, r))
    out = []
    counts = None
    for c in cols:
        if c == "mu":
            v = max_matching_size(g)
        elif c in ("phi_left", "phi_right", "phi_graph_min"):
            counts = counts or non_isolated_counts(g)
            v = {"phi_left": counts[0], "phi_right": counts[1], "phi_graph_min": min(counts)}[c]
        elif c == "psi_naive":
            v = greedy_naive(g, heuristic_stream(req.master_seed, TAG_NAIVE, r)).size
        elif c == "psi_prior":
            v = greedy_prioritizing(g, heuristic_stream(req.master_seed, TAG_PRIOR, r)).size
        elif c == "ks":
            v = karp_sipser(g, heuristic_stream(req.master_seed, TAG_KS, r)).size
        else:  # weight
            v = max_weight_matching(g).weight_total
        out.append(v / n)
    return out


def replicate_matrix(req: EstimateRequest, threads: Union[int, str, None] = 1) -> tuple[list[str], np.ndarray]:
    """(column names, replicates x columns array of per-graph fractions)."""
    req.validate()
    cols = _raw_columns(req.metrics)
    R = int(req.replicates)
    data = np.empty((R, len(cols)))
    nthreads = resolve_threads(threads)

    def work(lo: int, hi: int) -> None:
        for r in range(lo, hi):
            data[r] = _replicate(req, cols, r)

    if nthreads <= 1 or R < 2:
        work(0, R)
    else:
        chunks = max(nthreads * 8, 1)
        bounds = np.linspace(0, R, min(chunks, R) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            list(pool.map(lambda ab: work(*ab), zip(bounds[:-1], bounds[1:])))
    return cols, data


def _mean_se(x: np.ndarray) -> MetricEstimate:
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return MetricEstimate(m, se)


def estimate(req: EstimateRequest, threads: Union[int, str, None] = 1, keep_samples: bool = False) -> Estimate:
    cols, data = replicate_matrix(req, threads)
    col = {c: data[:, i] for i, c in enumerate(cols)}
    values = {}
    for m in req.metrics:
        if m == "phi":
            left, right = _mean_se(col["phi_left"]), _mean_se(col["phi_right"])
            values[m] = left if left.mean <= right.mean else right
        else:
            values[m] = _mean_se(col[m])
    return Estimate(req, values, int(req.replicates), col if keep_samples else None)


def phi_samples(est: Estimate) -> np.ndarray:
    """Per-replicate values of the side selected for ``phi``."""
    s = est.samples
    if s is None or "phi_left" not in s:
        raise InvalidParamsError("estimate was not run with keep_samples and metric phi")
    return s["phi_left"] if s["phi_left"].mean() <= s["phi_right"].mean() else s["phi_right"]


# ---------------------------------------------------------------------------
# comparisons, sweeps and heatmaps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    """Paired comparison of two allocations on common replicate streams."""

    mean_a: float
    se_a: float
    mean_b: float
    se_b: float
    diff: float  # a - b
    diff_se: float

    @property
    def z(self) -> float:
        return self.diff / self.diff_se if self.diff_se > 0 else (math.inf if self.diff > 0 else -math.inf if self.diff < 0 else 0.0)

    @property
    def ratio(self) -> float:
        return self.mean_a / self.mean_b if self.mean_b != 0 else math.nan


def _metric_samples(est: Estimate, metric: str) -> np.ndarray:
    return phi_samples(est) if metric == "phi" else est.samples[metric]


def compare_allocations(
    variant: "Variant | str",
    params: ModelParams,
    alloc_a: FlexAllocation,
    alloc_b: FlexAllocation,
    metric: str,
    replicates: int,
    master_seed: int,
    threads: Union[int, str, None] = 1,
) -> Comparison:
    ea = estimate(EstimateRequest(variant, params, alloc_a, replicates, (metric,), master_seed), threads, True)
    eb = estimate(EstimateRequest(variant, params, alloc_b, replicates, (metric,), master_seed), threads, True)
    d = _metric_samples(ea, metric) - _metric_samples(eb, metric)
    dse = _mean_se(d).std_err
    return Comparison(ea.mean(metric), ea.std_err(metric), eb.mean(metric), eb.std_err(metric), float(d.mean()), dse)


def sweep_allocations(
    variant: "Variant | str",
    params: ModelParams,
    B: float,
    grid_points: int,
    metrics: Sequence[str],
    replicates: int,
    master_seed: int,
    threads: Union[int, str, None] = 1,
) -> list[dict]:
    if grid_points < 2:
        raise InvalidParamsError("grid_points must be >= 2")
    if not 0 <= B <= 2:
        raise InvalidParamsError("B must lie in [0, 2]")
    rows = []
    for i in range(grid_points):
        bl = B * i / (grid_points - 1)
        br = B - bl
        if bl > 1 or br > 1:
            continue
        req = EstimateRequest(variant, params, FlexAllocation(bl, max(br, 0.0)), replicates, tuple(metrics), master_seed)
        rows += estimate(req, threads).rows()
    return rows


def heatmap_ratio(
    variant: "Variant | str",
    params_grid: Iterable[tuple[float, float]],
    B: float,
    metric: str,
    replicates: int,
    master_seed: int,
    n: int,
    threads: Union[int, str, None] = 1,
    k: Optional[int] = None,
    lam: Optional[float] = None,
) -> list[dict]:
    """For each (alpha, alpha_f): rows for (B, 0), (B/2, B/2), the ratio
    balanced / one-sided (delta-method SE) and the paired difference
    balanced - one-sided.  Ratios with a zero denominator are emitted as nan."""
    rows = []
    variant = Variant(variant)
    for alpha, alpha_f in params_grid:
        if not alpha_f > alpha:
            raise InvalidParamsError("heatmap cells need alpha_f > alpha")
        params = ModelParams(alpha, alpha_f, n, k=k, lam=lam)
        c = compare_allocations(
            variant, params, FlexAllocation(B / 2, B / 2), FlexAllocation(B, 0.0), metric, replicates, master_seed, threads
        )
        base = dict(variant=variant.value, alpha=alpha, alpha_f=alpha_f, B=B, replicates=replicates, seed=master_seed)
        rows.append(dict(base, b_l=B, b_r=0.0, metric=metric, mean=c.mean_b, std_err=c.se_b))
        rows.append(dict(base, b_l=B / 2, b_r=B / 2, metric=metric, mean=c.mean_a, std_err=c.se_a))
        if c.mean_b > 0:
            r = c.mean_a / c.mean_b
            rse = abs(r) * math.sqrt((c.se_a / c.mean_a) ** 2 + (c.se_b / c.mean_b) ** 2) if c.mean_a > 0 else c.se_a / c.mean_b
        else:
            r, rse = math.nan, math.nan
        rows.append(dict(base, b_l=B / 2, b_r=B / 2, metric=f"{metric}_ratio", mean=r, std_err=rse))
        rows.append(dict(base, b_l=B / 2, b_r=B / 2, metric=f"{metric}_diff", mean=c.diff, std_err=c.diff_se))
    return rows


def heatmap_grid(alphas: Sequence[float], gaps: Sequence[float]) -> list[tuple[float, float]]:
    """Cells over (alpha, alpha_f - alpha)."""
    return [(float(a), float(a + d)) for a in alphas for d in gaps]


__all__ = [
    "ESTIMATE_COLUMNS",
    "METRICS",
    "EstimateRequest",
    "Estimate",
    "MetricEstimate",
    "Comparison",
    "estimate",
    "compare_allocations",
    "sweep_allocations",
    "heatmap_ratio",
    "heatmap_grid",
    "replicate_matrix",
    "heuristic_stream",
]
