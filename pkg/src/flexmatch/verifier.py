"""Cell-grid certificates and the coupling inequality check.

A certificate covers a parameter cell ``[alpha, alpha + delta) x
[alpha_f, alpha_f + delta)``.  The reduced systems are solved once at the
lower-left anchor with tolerance ``eps``; solution enclosures are widened
by the continuity factor ``(1 - 2 delta)`` and the comparison or sign
condition is evaluated on the resulting bounds.

All bounds are evaluated in ordinary double precision.  A slack of 1e-10 is
subtracted from every certified margin to absorb rounding; no directed
rounding is attempted.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import numba

from .errors import InvalidParamsError
from .graphs import BipartiteGraph
from .ks_solver import ALPHA_MIN, DEFAULT_EPS, solve_reduced_balanced, solve_reduced_one_sided
from .matching import max_matching_size
from .rng import RngSeed, as_seed, make_generator

SLACK = 1e-10


class Verdict(str, Enum):
    VERIFIED = "verified"
    UNVERIFIED = "unverified"
    OUT_OF_REGIME = "out_of_regime"


@dataclass(frozen=True)
class CellCertificate:
    alpha: float
    alpha_f: float
    delta: float
    eps: float
    lower_bound_gap: float
    verdict: Verdict

    def to_row(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d


@dataclass(frozen=True)
class SolutionBounds:
    x_lb: float
    x_ub: float
    x1_lb: float
    x1_ub: float
    x2_lb: float
    x2_ub: float


def cell_in_regime(alpha: float, alpha_f: float, delta: float) -> bool:
    return 0 < delta < 0.5 and ALPHA_MIN < alpha < alpha_f and alpha_f + alpha + 2 * delta < math.e


def solution_bounds(alpha: float, alpha_f: float, delta: float, eps: float, need_one_sided: bool = True) -> SolutionBounds:
    """Enclosures of x (one-sided) and x1, x2 (balanced) valid over the cell."""
    shrink = 1 - 2 * delta
    if need_one_sided:
        xs = solve_reduced_one_sided(alpha, alpha_f, eps, strict=True).x
        x_lb, x_ub = (xs - eps) * shrink, xs + eps
    else:
        x_lb = x_ub = math.nan
    x1s = solve_reduced_balanced(alpha, alpha_f, eps, strict=True).x1
    m = alpha_f + alpha
    x2_lb = -2 * (math.log(x1s + eps) + alpha_f * (x1s + eps)) / m * shrink
    x2_ub = -2 * (math.log(x1s - eps) + alpha_f * (x1s - eps)) / m
    return SolutionBounds(x_lb, x_ub, (x1s - eps) * shrink, x1s + eps, x2_lb, x2_ub)


# ---------------------------------------------------------------------------
# one-sided against balanced
# ---------------------------------------------------------------------------


def one_sided_lower_bound(alpha: float, alpha_f: float, delta: float, b: SolutionBounds) -> float:
    m = alpha_f + alpha
    return 2 - b.x_ub - math.exp(-m * b.x_lb) * (1 + (m + 2 * delta) * b.x_ub)


def balanced_upper_bound(alpha: float, alpha_f: float, delta: float, b: SolutionBounds) -> float:
    a, af = alpha, alpha_f
    h = 0.5 * (af + a)
    hd = 0.5 * (af + a + 2 * delta)
    e1 = math.exp(-(af + delta) * b.x1_ub - hd * b.x2_ub)
    e2 = math.exp(-hd * b.x1_ub - (a + delta) * b.x2_ub)
    return (
        2
        - 0.5 * b.x1_lb
        - 0.5 * b.x2_lb
        - 0.5 * e1 * (1 + af * b.x1_lb + h * b.x2_lb)
        - 0.5 * e2 * (1 + h * b.x1_lb + a * b.x2_lb)
    )


def certify_comparison_cell(alpha: float, alpha_f: float, delta: float, eps: float = DEFAULT_EPS) -> CellCertificate:
    """Certified lower bound on mu(1, 0) - mu(1/2, 1/2) over one cell."""
    if not cell_in_regime(alpha, alpha_f, delta):
        return CellCertificate(alpha, alpha_f, delta, eps, math.nan, Verdict.OUT_OF_REGIME)
    b = solution_bounds(alpha, alpha_f, delta, eps)
    gap = one_sided_lower_bound(alpha, alpha_f, delta, b) - balanced_upper_bound(alpha, alpha_f, delta, b) - SLACK
    return CellCertificate(alpha, alpha_f, delta, eps, gap, Verdict.VERIFIED if gap > 0 else Verdict.UNVERIFIED)


def grid_anchors(lo: float, hi: float, step: float, open_low: bool = False) -> list[float]:
    """Multiples k*step inside [lo, hi] (or (lo, hi]), computed from integers
    so that anchors never drift."""
    if hi < lo:
        return []
    k0 = math.ceil(lo / step - 1e-9)
    k1 = math.floor(hi / step + 1e-9)
    out = [round(k * step, 12) for k in range(k0, k1 + 1)]
    return [v for v in out if (v > lo if open_low else v >= lo - 1e-12)]


@dataclass(frozen=True)
class RegionSummary:
    cells: list
    verified_fraction: float
    frontier: dict = field(default_factory=dict)


def _run_cells(fn, anchors: Sequence[tuple[float, float]], threads: int) -> list:
    if threads <= 1 or len(anchors) < 2:
        return [fn(a, af) for a, af in anchors]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda p: fn(*p), anchors))


def region_anchors(
    delta: float, alpha_range: tuple[float, float], alpha_f_range: tuple[float, float]
) -> list[tuple[float, float]]:
    alphas = grid_anchors(alpha_range[0], alpha_range[1], delta, open_low=True)
    alpha_fs = grid_anchors(alpha_f_range[0], alpha_f_range[1], delta)
    return [(a, af) for af in alpha_fs for a in alphas]


def certify_comparison_region(
    delta: float,
    eps: float = DEFAULT_EPS,
    alpha_range: tuple[float, float] = (ALPHA_MIN, math.e),
    alpha_f_range: tuple[float, float] = (0.0, math.e),
    threads: int = 1,
) -> RegionSummary:
    """Sweep the delta-grid of anchors; frontier maps each alpha_f anchor to
    the largest alpha whose cell is verified."""
    anchors = region_anchors(delta, alpha_range, alpha_f_range)
    cells = _run_cells(lambda a, af: certify_comparison_cell(a, af, delta, eps), anchors, threads)
    in_reg = [c for c in cells if c.verdict != Verdict.OUT_OF_REGIME]
    frac = sum(c.verdict == Verdict.VERIFIED for c in in_reg) / len(in_reg) if in_reg else math.nan
    frontier: dict = {}
    for c in cells:
        if c.verdict == Verdict.VERIFIED:
            frontier[c.alpha_f] = max(frontier.get(c.alpha_f, -math.inf), c.alpha)
    return RegionSummary(cells, frac, frontier)


# ---------------------------------------------------------------------------
# second-order signs at the balanced point
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SodCertificate:
    alpha: float
    alpha_f: float
    delta: float
    eps: float
    convex_lb: float
    concave_ub: float
    convex_verified: bool
    concave_verified: bool
    in_regime: bool
    concave_ub_sound: float = math.nan


def convex_lower_bound(alpha: float, alpha_f: float, delta: float, b: SolutionBounds) -> float:
    a, af = alpha, alpha_f
    num = (
        -((af - a + delta) ** 2) * 4 * b.x1_ub * b.x2_ub * (b.x1_ub + b.x2_ub)
        + 16 * max(0.0, b.x2_lb - b.x1_ub) * af * b.x1_lb
        - 16 * (b.x2_ub - b.x1_lb) * (a + delta) * b.x2_ub
    )
    den = -(max(af - a - delta, 0.0) ** 2) * b.x1_lb * b.x2_lb + 4 * (1 - a * b.x2_lb - af * b.x1_lb)
    return num / den


def convex_denominator_lower(alpha: float, alpha_f: float, delta: float, b: SolutionBounds) -> float:
    """Lower bound on the denominator of the (1, -1) sod over the cell; the
    displayed lower bound only implies convexity when this is positive."""
    a, af = alpha, alpha_f
    return -((af - a + delta) ** 2) * b.x1_ub * b.x2_ub + 4 * (1 - (a + delta) * b.x2_ub - (af + delta) * b.x1_ub)


def concave_upper_bound(alpha: float, alpha_f: float, delta: float, b: SolutionBounds) -> float:
    a, af = alpha, alpha_f
    den = (
        -((b.x1_ub * b.x2_ub * (af - a + delta) ** 2) ** 2)
        + 8 * (af + a) ** 2 * b.x1_lb * b.x2_lb
        + 16 * a**2 * b.x2_lb**2
        + 16 * af**2 * b.x1_lb**2
        - 16
    )
    q = b.x1_lb * b.x2_lb * max(0.0, af - a - delta) ** 2
    num = (
        -2 * (b.x1_lb + b.x2_lb) * q * q
        - 16 * (b.x1_lb + b.x2_lb) * b.x1_lb * b.x2_lb * af * a
        + 8 * (af + delta) ** 2 * (b.x1_ub * b.x2_ub**2 + 4 * b.x1_ub**3)
        + 8 * (a + delta) ** 2 * (b.x2_ub * b.x1_ub**2 + 4 * b.x2_ub**3)
        - 24 * af**2 * b.x1_lb**2 * b.x2_lb
        - 24 * a**2 * b.x2_lb**2 * b.x1_lb
    )
    return num / den


# Polynomials in (alpha, alpha_f, x1, x2) as {exponents: coefficient}.
Poly = dict


def _poly_mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = tuple(i + j for i, j in zip(e1, e2))
            out[e] = out.get(e, 0.0) + c1 * c2
    return {e: c for e, c in out.items() if c != 0.0}


def _poly_add(*ps: Poly) -> Poly:
    out: Poly = {}
    for p in ps:
        for e, c in p.items():
            out[e] = out.get(e, 0.0) + c
    return {e: c for e, c in out.items() if c != 0.0}


def _poly_scale(p: Poly, k: float) -> Poly:
    return {e: k * c for e, c in p.items()}


def _poly_diff(p: Poly, var: int) -> Poly:
    out: Poly = {}
    for e, c in p.items():
        if e[var]:
            d = list(e)
            d[var] -= 1
            out[tuple(d)] = c * e[var]
    return out


def _concave_polys() -> tuple[Poly, Poly]:
    A, F, X1, X2 = ({tuple(int(i == j) for j in range(4)): 1.0} for i in range(4))
    one = {(0, 0, 0, 0): 1.0}
    fma = _poly_add(F, _poly_scale(A, -1.0))
    fpa = _poly_add(F, A)
    fma2 = _poly_mul(fma, fma)
    x12 = _poly_mul(X1, X2)
    q2 = _poly_mul(_poly_mul(x12, x12), _poly_mul(fma2, fma2))
    s = _poly_add(X1, X2)
    num = _poly_add(
        _poly_scale(_poly_mul(s, q2), -2.0),
        _poly_scale(_poly_mul(_poly_mul(s, x12), _poly_mul(F, A)), -16.0),
        _poly_scale(
            _poly_mul(_poly_mul(F, F), _poly_add(_poly_mul(x12, X2), _poly_scale(_poly_mul(x12, X1), -3.0),
                                                  _poly_scale(_poly_mul(_poly_mul(X1, X1), X1), 4.0))),
            8.0,
        ),
        _poly_scale(
            _poly_mul(_poly_mul(A, A), _poly_add(_poly_mul(x12, X1), _poly_scale(_poly_mul(x12, X2), -3.0),
                                                  _poly_scale(_poly_mul(_poly_mul(X2, X2), X2), 4.0))),
            8.0,
        ),
    )
    den = _poly_add(
        _poly_scale(q2, -1.0),
        _poly_scale(_poly_mul(x12, _poly_mul(fpa, fpa)), 8.0),
        _poly_scale(_poly_mul(_poly_mul(A, A), _poly_mul(X2, X2)), 16.0),
        _poly_scale(_poly_mul(_poly_mul(F, F), _poly_mul(X1, X1)), 16.0),
        _poly_scale(one, -16.0),
    )
    return num, den


def _poly_arrays(p: Poly) -> tuple[np.ndarray, np.ndarray]:
    exps = np.array(list(p.keys()), dtype=np.int64).reshape(-1, 4)
    return exps, np.array(list(p.values()), dtype=np.float64)


@numba.njit(cache=True, nogil=True)
def _monomial(e: np.ndarray, v: np.ndarray) -> float:
    out = 1.0
    for j in range(4):
        out *= v[j] ** e[j]
    return out


@numba.njit(cache=True, nogil=True)
def _poly_eval(exps: np.ndarray, coefs: np.ndarray, v: np.ndarray) -> float:
    out = 0.0
    for i in range(coefs.size):
        out += coefs[i] * _monomial(exps[i], v)
    return out


@numba.njit(cache=True, nogil=True)
def _poly_range(exps: np.ndarray, coefs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
    """Enclosure over a box in the nonnegative orthant, monomial by monomial."""
    r_lo = 0.0
    r_hi = 0.0
    for i in range(coefs.size):
        m_lo = _monomial(exps[i], lo)
        m_hi = _monomial(exps[i], hi)
        c = coefs[i]
        if c > 0:
            r_lo += c * m_lo
            r_hi += c * m_hi
        else:
            r_lo += c * m_hi
            r_hi += c * m_lo
    return r_lo, r_hi


@numba.njit(cache=True, nogil=True)
def _mean_value_range(exps, coefs, gexps, gcoefs, lo, hi) -> tuple[float, float]:
    """Tighter of the monomial-wise enclosure and the mean-value form around
    the box midpoint; gradient component j is the polynomial (gexps[j], gcoefs[j])."""
    mid = (lo + hi) / 2
    c = _poly_eval(exps, coefs, mid)
    spread = 0.0
    for j in range(4):
        g_lo, g_hi = _poly_range(gexps[j], gcoefs[j], lo, hi)
        spread += max(abs(g_lo), abs(g_hi)) * (hi[j] - lo[j]) / 2
    n_lo, n_hi = _poly_range(exps, coefs, lo, hi)
    return max(c - spread, n_lo), min(c + spread, n_hi)


def _padded_grads(p: Poly) -> tuple[np.ndarray, np.ndarray]:
    parts = [_poly_arrays(_poly_diff(p, j)) for j in range(4)]
    k = max(c.size for _, c in parts)
    gexps = np.zeros((4, k, 4), dtype=np.int64)
    gcoefs = np.zeros((4, k))
    for j, (e, c) in enumerate(parts):
        gexps[j, : c.size] = e
        gcoefs[j, : c.size] = c
    return gexps, gcoefs


_NUM_POLY, _DEN_POLY = _concave_polys()
_CONCAVE_NUM = _poly_arrays(_NUM_POLY) + _padded_grads(_NUM_POLY)
_CONCAVE_DEN = _poly_arrays(_DEN_POLY) + _padded_grads(_DEN_POLY)


def concave_enclosures(
    alpha: float, alpha_f: float, delta: float, b: SolutionBounds
) -> tuple[float, float, float, float]:
    """(num_lo, num_hi, den_lo, den_hi) for the (0, 1) sod over the cell.

    Each is the tighter of the monomial-wise enclosure and the mean-value
    form around the box midpoint.
    """
    lo = np.array([alpha, alpha_f, b.x1_lb, b.x2_lb])
    hi = np.array([alpha + delta, alpha_f + delta, b.x1_ub, b.x2_ub])
    num_lo, num_hi = _mean_value_range(*_CONCAVE_NUM, lo, hi)
    den_lo, den_hi = _mean_value_range(*_CONCAVE_DEN, lo, hi)
    return num_lo, num_hi, den_lo, den_hi


def concave_quotient_bound(alpha: float, alpha_f: float, delta: float, b: SolutionBounds) -> float:
    """Upper bound on the (0, 1) sod over the cell from the corner quotients
    of the enclosures; +inf when the denominator enclosure contains zero."""
    num_lo, num_hi, den_lo, den_hi = concave_enclosures(alpha, alpha_f, delta, b)
    if den_lo <= 0.0 <= den_hi:
        return math.inf
    return max(n / d for n in (num_lo, num_hi) for d in (den_lo, den_hi))


def concave_sign_verified(alpha: float, alpha_f: float, delta: float, b: SolutionBounds) -> bool:
    """Whether numerator and denominator have strictly opposite signs on the cell."""
    num_lo, num_hi, den_lo, den_hi = concave_enclosures(alpha, alpha_f, delta, b)
    return (num_lo > SLACK and den_hi < -SLACK) or (num_hi < -SLACK and den_lo > SLACK)


def certify_sod_cell(alpha: float, alpha_f: float, delta: float, eps: float = DEFAULT_EPS) -> SodCertificate:
    """Convexity along (1, -1) and concavity along (0, 1) of xi at (1/2, 1/2).

    ``concave_ub`` is the displayed bound.  Where the numerator is positive
    and the denominator negative it falls below the true value, so concavity
    additionally requires the enclosures of numerator and denominator to
    have opposite signs; ``concave_ub_sound`` is the corner-quotient bound.
    """
    if not cell_in_regime(alpha, alpha_f, delta):
        return SodCertificate(alpha, alpha_f, delta, eps, math.nan, math.nan, False, False, False, math.nan)
    b = solution_bounds(alpha, alpha_f, delta, eps, need_one_sided=False)
    lb = convex_lower_bound(alpha, alpha_f, delta, b) - SLACK
    ub = concave_upper_bound(alpha, alpha_f, delta, b) + SLACK
    ub_sound = concave_quotient_bound(alpha, alpha_f, delta, b) + SLACK
    convex_ok = lb > 0 and convex_denominator_lower(alpha, alpha_f, delta, b) > SLACK
    concave_ok = ub < 0 and concave_sign_verified(alpha, alpha_f, delta, b)
    return SodCertificate(alpha, alpha_f, delta, eps, lb, ub, convex_ok, concave_ok, True, ub_sound)


def in_sod_region(alpha: float, alpha_f: float) -> bool:
    return ALPHA_MIN < alpha < 0.64 * alpha_f - 0.03 and 0.62 * alpha_f + alpha < 1.68


def cell_inside(pred: Callable[[float, float], bool], alpha: float, alpha_f: float, delta: float) -> bool:
    """Whether all four corners of the cell satisfy ``pred``."""
    return all(pred(alpha + s, alpha_f + t) for s in (0.0, delta) for t in (0.0, delta))


def certify_sod_region(
    delta: float,
    eps: float = DEFAULT_EPS,
    alpha_range: tuple[float, float] = (ALPHA_MIN, math.e),
    alpha_f_range: tuple[float, float] = (0.0, math.e),
    threads: int = 1,
) -> list[SodCertificate]:
    anchors = region_anchors(delta, alpha_range, alpha_f_range)
    return _run_cells(lambda a, af: certify_sod_cell(a, af, delta, eps), anchors, threads)


# ---------------------------------------------------------------------------
# monotonicity of f1
# ---------------------------------------------------------------------------


def f1_derivative_lower_bound(alpha: float, alpha_f: float, x1: float, delta1: float, delta2: float) -> float:
    """Lower bound on f1' over [alpha_f, +d1) x [alpha, +d1) x [x1, +d2)."""
    a, af = alpha, alpha_f
    m = af + a
    md = m + 2 * delta1
    xd = x1 + delta2
    inv = 1 / xd if xd > 0 else math.inf
    log_xd = math.log(xd) if xd > 0 else -math.inf
    e1 = math.exp(-0.5 * m * x1 + 2 * (af + delta1) * (a + delta1) * xd / m + 2 * a * log_xd / md)
    out = e1 * (-0.5 * md) + 2 * (af + inv) / md
    if x1 > 0:
        e2 = math.exp(-0.5 * md * xd + 2 * af * a * x1 / md + 2 * (a + delta1) * math.log(x1) / m)
        out += e2 * (2 * a * (af + inv) / md)
    return out


def verify_f1_monotonicity_cell(alpha: float, alpha_f: float, x1: float, delta1: float, delta2: float) -> bool:
    if not 0 <= x1 <= 1:
        raise InvalidParamsError("x1 must lie in [0, 1]")
    return f1_derivative_lower_bound(alpha, alpha_f, x1, delta1, delta2) > 1


def verify_f1_monotonicity_region(delta1: float, delta2: float) -> tuple[int, int, list[tuple[float, float, float]]]:
    """Sweep anchors alpha_f, alpha in {1e-4, d1, 2 d1, ...} with
    1e-4 <= alpha < alpha_f and alpha_f + alpha < e, and x1 in {0, d2, ..., 1}.
    Returns (cells checked, cells passed, failing anchors)."""
    params = [ALPHA_MIN] + grid_anchors(delta1, math.e, delta1)
    xs = grid_anchors(0.0, 1.0, delta2)
    total = passed = 0
    failures = []
    for af in params:
        for a in params:
            if not (a < af and af + a < math.e):
                continue
            for x1 in xs:
                total += 1
                if verify_f1_monotonicity_cell(a, af, x1, delta1, delta2):
                    passed += 1
                else:
                    failures.append((a, af, x1))
    return total, passed, failures


# ---------------------------------------------------------------------------
# coupling inequality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingSets:
    """Directed edge sets as boolean (n/2 x n/2) blocks, indexed
    (left offset, right offset) within the halves they connect."""

    x1: np.ndarray  # left top -> right top
    x2: np.ndarray  # right top -> left top
    x3: np.ndarray  # right top -> left bottom, indexed (left bottom, right top)
    x4: np.ndarray  # left top -> right bottom, indexed (left top, right bottom)


@dataclass(frozen=True)
class CouplingReport:
    n: int
    alpha_f: float
    replicates: int
    seed: int
    violations: int
    max_violation: int
    mean_gap_per_node: float
    std_err: float

    def to_dict(self) -> dict:
        return asdict(self)


def _pairs(block: np.ndarray, row_off: int, col_off: int) -> np.ndarray:
    e = np.argwhere(block)
    return np.column_stack((e[:, 0] + row_off, e[:, 1] + col_off))


def coupled_graphs(sets: CouplingSets, n: int) -> tuple[BipartiteGraph, ...]:
    """Graphs A, B, C, D; flipping maps node i to n-1-i on both sides."""
    h = n // 2
    e1 = _pairs(sets.x1, 0, 0)
    e2 = _pairs(sets.x2, 0, 0)
    e3 = _pairs(sets.x3, h, 0)
    e4 = _pairs(sets.x4, 0, h)
    flip = lambda e: (n - 1) - e  # noqa: E731
    A = [e1, e2, e3, e4]
    B = [e1, e2, flip(e3), flip(e4)]
    C = [flip(e1), e2, e3, e4]
    D = [flip(e1), e2, flip(e3), flip(e4)]
    return tuple(BipartiteGraph.from_edges(n, n, np.concatenate(parts)) for parts in (A, B, C, D))


def sample_coupling_sets(n: int, alpha_f: float, seed: "RngSeed | int") -> CouplingSets:
    h = n // 2
    p = alpha_f / n
    rng = make_generator(as_seed(seed))
    blocks = rng.random((4, h, h)) < p
    return CouplingSets(blocks[0], blocks[1], blocks[2], blocks[3])


def coupling_difference(sets: CouplingSets, n: int, matcher: Callable[[BipartiteGraph], int] = max_matching_size) -> int:
    """M_C + M_D - M_A - M_B (nonnegative when the inequality holds)."""
    a, b, c, d = (int(matcher(g)) for g in coupled_graphs(sets, n))
    return c + d - a - b


def coupling_inequality_check(
    n: int,
    alpha_f: float,
    seed: int,
    replicates: int,
    matcher: Callable[[BipartiteGraph], int] = max_matching_size,
    threads: int = 1,
) -> CouplingReport:
    if n < 2 or n % 2:
        raise InvalidParamsError("n must be an even integer >= 2")
    if not 0 <= alpha_f <= n:
        raise InvalidParamsError("need 0 <= alpha_f <= n")
    if replicates < 1:
        raise InvalidParamsError("replicates must be positive")

    def one(r: int) -> int:
        return coupling_difference(sample_coupling_sets(n, alpha_f, RngSeed(seed, r)), n, matcher)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            diffs = np.fromiter(pool.map(one, range(replicates)), dtype=np.int64, count=replicates)
    else:
        diffs = np.fromiter((one(r) for r in range(replicates)), dtype=np.int64, count=replicates)
    gaps = diffs / (2 * n)
    se = float(gaps.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
    return CouplingReport(
        n=n,
        alpha_f=alpha_f,
        replicates=replicates,
        seed=seed,
        violations=int(np.count_nonzero(diffs < 0)),
        max_violation=int(max(0, -diffs.min())),
        mean_gap_per_node=float(gaps.mean()),
        std_err=se,
    )


def exhaustive_coupling_sets(n: int, max_edges: int) -> Iterable[CouplingSets]:
    """Every configuration of X1..X4 with at most ``max_edges`` directed edges."""
    h = n // 2
    universe = [(k, i, j) for k in range(4) for i in range(h) for j in range(h)]
    for r in range(max_edges + 1):
        for combo in itertools.combinations(universe, r):
            blocks = np.zeros((4, h, h), dtype=bool)
            for k, i, j in combo:
                blocks[k, i, j] = True
            yield CouplingSets(blocks[0], blocks[1], blocks[2], blocks[3])
