"""Karp-Sipser fixed-point theory: the 8-dimensional monotone system, the
matched-fraction expressions xi / xi_hat, the reduced scalar solves at the
one-sided and balanced allocations, and the exact second-order directional
derivatives at the balanced point."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numba
import numpy as np

from .errors import InvalidParamsError, NonConvergenceError, RegimeError
from .graphs import FlexAllocation

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 1_000_000
DEFAULT_EPS = 1e-8
ALPHA_MIN = 1e-4  # lower edge of the certified regime
JACOBI_STAGE = 20_000
NEWTON_STEPS = 100


@dataclass(frozen=True)
class KsVector:
    w_L_f: float
    w_L_nf: float
    w_H_f: float
    w_H_nf: float
    w_hat_L_f: float
    w_hat_L_nf: float
    w_hat_H_f: float
    w_hat_H_nf: float

    @classmethod
    def from_array(cls, a) -> "KsVector":
        return cls(*(float(v) for v in a))

    def to_array(self) -> np.ndarray:
        return np.array(list(asdict(self).values()))


@dataclass(frozen=True)
class KsSolution:
    y: KsVector
    xi: float
    xi_hat: float
    mu_ks: float
    iterations: int
    residual: float
    subcritical: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["y"] = asdict(self.y)
        return d


def is_subcritical(alpha: float, alpha_f: float) -> bool:
    return alpha_f + alpha < math.e


def in_certified_regime(alpha: float, alpha_f: float) -> bool:
    return ALPHA_MIN < alpha < alpha_f and alpha_f + alpha < math.e


def _check(alpha: float, alpha_f: float) -> None:
    if not (0 <= alpha < alpha_f) or not math.isfinite(alpha_f):
        raise InvalidParamsError(f"need alpha_f > alpha >= 0, got alpha={alpha}, alpha_f={alpha_f}")


# ---------------------------------------------------------------------------
# full system
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _ks_map(w, out, a, af, bl, br):
    m = af + a
    # left side, seen from right-side neighbours with allocation br
    out[0] = math.exp(-2 * br * af * (1 - w[6]) - (1 - br) * m * (1 - w[7]))
    out[1] = math.exp(-br * m * (1 - w[6]) - 2 * (1 - br) * a * (1 - w[7]))
    out[2] = 1 - math.exp(-2 * br * af * w[4] - (1 - br) * m * w[5])
    out[3] = 1 - math.exp(-br * m * w[4] - 2 * (1 - br) * a * w[5])
    # hatted side, neighbours drawn with allocation bl
    out[4] = math.exp(-2 * bl * af * (1 - w[2]) - (1 - bl) * m * (1 - w[3]))
    out[5] = math.exp(-bl * m * (1 - w[2]) - 2 * (1 - bl) * a * (1 - w[3]))
    out[6] = 1 - math.exp(-2 * bl * af * w[0] - (1 - bl) * m * w[1])
    out[7] = 1 - math.exp(-bl * m * w[0] - 2 * (1 - bl) * a * w[1])


@numba.njit(cache=True, nogil=True)
def _iterate_from(w0, a, af, bl, br, tol, max_iter):
    w = w0.copy()
    nxt = np.empty(8)
    change = np.inf
    it = 0
    while it < max_iter:
        _ks_map(w, nxt, a, af, bl, br)
        it += 1
        change = 0.0
        for k in range(8):
            d = abs(nxt[k] - w[k])
            if d > change:
                change = d
            w[k] = nxt[k]
        if change < tol:
            break
    return w, it, change


@numba.njit(cache=True, nogil=True)
def _iterate(a, af, bl, br, tol, max_iter):
    return _iterate_from(np.zeros(8), a, af, bl, br, tol, max_iter)


def ks_map(alpha: float, alpha_f: float, alloc: FlexAllocation, w) -> np.ndarray:
    """One Jacobi application of the monotone map to an 8-vector."""
    out = np.empty(8)
    _ks_map(np.asarray(w, dtype=float), out, alpha, alpha_f, alloc.b_l, alloc.b_r)
    return out


def xi_pair(alpha: float, alpha_f: float, alloc: FlexAllocation, y) -> tuple[float, float]:
    a, af = alpha, alpha_f
    m = af + a
    bl, br = alloc.b_l, alloc.b_r
    yLf, yLnf, yHf, yHnf, hLf, hLnf, hHf, hHnf = (float(v) for v in y)
    xi = (
        2
        - bl * yLf
        - br * (1 - hHf)
        - br * (1 - hHf) * (2 * bl * af * yLf + (1 - bl) * m * yLnf)
        - (1 - bl) * yLnf
        - (1 - br) * (1 - hHnf)
        - (1 - br) * (1 - hHnf) * (bl * m * yLf + 2 * (1 - bl) * a * yLnf)
    )
    xi_hat = (
        2
        - br * hLf
        - bl * (1 - yHf)
        - bl * (1 - yHf) * (2 * br * af * hLf + (1 - br) * m * hLnf)
        - (1 - br) * hLnf
        - (1 - bl) * (1 - yHnf)
        - (1 - bl) * (1 - yHnf) * (br * m * hLf + 2 * (1 - br) * a * hLnf)
    )
    return xi, xi_hat


def _newton_polish(alpha: float, alpha_f: float, alloc: FlexAllocation, w0: np.ndarray, tol: float):
    """Newton steps on F(w) - w from a Jacobi iterate, for near-critical
    parameters where the monotone iteration slows to an algebraic rate.
    Returns None unless the residual drops below ``tol`` at a point that
    is not below the starting iterate (which bounds the least solution
    from below)."""
    w = w0.copy()
    h = 1e-7
    for _ in range(NEWTON_STEPS):
        fw = ks_map(alpha, alpha_f, alloc, w) - w
        if np.max(np.abs(fw)) < tol:
            break
        J = np.empty((8, 8))
        for k in range(8):
            e = w.copy()
            e[k] += h
            J[:, k] = (ks_map(alpha, alpha_f, alloc, e) - e - fw) / h
        try:
            step = np.linalg.solve(J, -fw)
        except np.linalg.LinAlgError:
            return None
        w = np.clip(w + step, 0.0, 1.0)
    if np.max(np.abs(ks_map(alpha, alpha_f, alloc, w) - w)) >= tol or np.any(w < w0 - 1e-9):
        return None
    return w


def solve_ks_fixed_point(
    alpha: float,
    alpha_f: float,
    alloc: FlexAllocation,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> KsSolution:
    """Least fixed point by Jacobi iteration from the zero vector.

    The map is monotone increasing, so the iterates rise componentwise to
    the smallest solution.  If the iteration has not settled after
    JACOBI_STAGE rounds (near-critical parameters), Newton polishing is
    tried before running on to ``max_iter``.  Values outside the
    subcritical regime are still returned, flagged ``subcritical=False``.
    """
    _check(alpha, alpha_f)
    if tol <= 0 or max_iter < 1:
        raise InvalidParamsError("tol must be positive and max_iter >= 1")
    bl, br = alloc.b_l, alloc.b_r
    w, it, change = _iterate(alpha, alpha_f, bl, br, tol, min(int(max_iter), JACOBI_STAGE))
    if change >= tol and it < max_iter:
        polished = _newton_polish(alpha, alpha_f, alloc, w, tol)
        if polished is not None:
            w, change = polished, 0.0
        else:
            w2, it2, change = _iterate_from(w, alpha, alpha_f, bl, br, tol, int(max_iter) - it)
            w, it = w2, it + it2
    residual = float(np.max(np.abs(ks_map(alpha, alpha_f, alloc, w) - w)))
    if change >= tol:
        raise NonConvergenceError(
            f"KS iteration did not reach tol={tol} in {max_iter} steps", it, float(change)
        )
    xi, xi_hat = xi_pair(alpha, alpha_f, alloc, w)
    return KsSolution(
        y=KsVector.from_array(w),
        xi=xi,
        xi_hat=xi_hat,
        mu_ks=min(xi, xi_hat),
        iterations=int(it),
        residual=residual,
        subcritical=is_subcritical(alpha, alpha_f),
    )


def mu_ks(alpha: float, alpha_f: float, alloc: FlexAllocation, tol: float = DEFAULT_TOL) -> float:
    return solve_ks_fixed_point(alpha, alpha_f, alloc, tol).mu_ks


# ---------------------------------------------------------------------------
# reduced scalar solves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReducedOneSided:
    x: float
    residual: float  # |f(x)|
    enclosure: tuple[float, float]
    certified: bool
    note: str = ""


@dataclass(frozen=True)
class ReducedBalanced:
    x1: float
    x2: float
    residual: float  # |f1(x1)|
    x1_enclosure: tuple[float, float]
    x2_enclosure: tuple[float, float]
    certified: bool
    note: str = ""


def _bracketed_newton(f, df, lo: float, hi: float, eps: float, max_iter: int = 200) -> float:
    """Root of an increasing function on [lo, hi]; stops once |f| < eps.
    Newton steps are accepted only when they land strictly inside the
    current bracket, otherwise the step is a bisection."""
    flo, fhi = f(lo), f(hi)
    if not (flo < 0 < fhi):
        raise NonConvergenceError("root not bracketed", 0, float("nan"))
    x = 0.5 * (lo + hi)
    for it in range(max_iter):
        fx = f(x)
        if abs(fx) < eps:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        d = df(x)
        cand = x - fx / d if d > 0 else lo - 1.0
        x = cand if lo < cand < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-300:
            break
    fx = f(x)
    if abs(fx) < eps:
        return x
    raise NonConvergenceError("bracketed Newton failed", max_iter, abs(fx))


def _regime_note(alpha: float, alpha_f: float) -> str:
    return "" if in_certified_regime(alpha, alpha_f) else (
        "outside 1e-4 < alpha < alpha_f, alpha_f + alpha < e; enclosure not certified"
    )


def solve_reduced_one_sided(
    alpha: float, alpha_f: float, eps: float = DEFAULT_EPS, strict: bool = False
) -> ReducedOneSided:
    """Value of y_L^f at b = (1, 0).

    In the certified regime the least solution of
    ``x = exp(-m exp(-m x))`` (m = alpha_f + alpha) coincides with the
    unique root of ``f(x) = x - exp(-m x)``, whose derivative exceeds 1,
    so ``|f(x_sol)| < eps`` gives the enclosure ``[x_sol - eps, x_sol + eps]``.
    Outside it the least solution is found by monotone iteration and the
    enclosure is flagged uncertified (``strict=True`` raises instead).
    """
    _check(alpha, alpha_f)
    m = alpha_f + alpha
    note = _regime_note(alpha, alpha_f)
    if note and strict:
        raise RegimeError(note)
    if not note:
        x = _bracketed_newton(lambda t: t - math.exp(-m * t), lambda t: 1 + m * math.exp(-m * t), 0.0, 1.0, eps)
        res = abs(x - math.exp(-m * x))
        return ReducedOneSided(x, res, (x - eps, x + eps), True)
    sol = solve_ks_fixed_point(alpha, alpha_f, FlexAllocation(1.0, 0.0))
    x = sol.y.w_L_f
    res = abs(x - math.exp(-m * math.exp(-m * x)))
    return ReducedOneSided(x, res, (x - eps, x + eps), False, note)


def f1(x1: float, alpha: float, alpha_f: float) -> float:
    m = alpha_f + alpha
    g = math.log(x1) + alpha_f * x1
    return math.exp(-0.5 * m * x1 + 2 * alpha / m * g) + 2 * g / m


def f1_prime(x1: float, alpha: float, alpha_f: float) -> float:
    m = alpha_f + alpha
    g = math.log(x1) + alpha_f * x1
    dg = alpha_f + 1 / x1
    return math.exp(-0.5 * m * x1 + 2 * alpha / m * g) * (-0.5 * m + 2 * alpha / m * dg) + 2 * dg / m


def x2_from_x1(x1: float, alpha: float, alpha_f: float) -> float:
    return -2 * (math.log(x1) + alpha_f * x1) / (alpha_f + alpha)


def solve_reduced_balanced(
    alpha: float, alpha_f: float, eps: float = DEFAULT_EPS, strict: bool = False
) -> ReducedBalanced:
    """(y_L^f, y_L^nf) at b = (1/2, 1/2) through the scalar equation f1 = 0.

    The enclosure for x1 rests on f1' > 1, and the x2 enclosure follows from
    x2 = -2(log x1 + alpha_f x1)/(alpha_f + alpha), decreasing in x1 on the
    relevant range.
    """
    _check(alpha, alpha_f)
    note = _regime_note(alpha, alpha_f)
    if note and strict:
        raise RegimeError(note)
    m = alpha_f + alpha
    if not note:
        x1 = _bracketed_newton(
            lambda t: f1(t, alpha, alpha_f), lambda t: f1_prime(t, alpha, alpha_f), 1e-300, 1.0, eps
        )
        x2 = x2_from_x1(x1, alpha, alpha_f)
    else:
        y = solve_ks_fixed_point(alpha, alpha_f, FlexAllocation(0.5, 0.5)).y
        x1, x2 = y.w_L_f, y.w_L_nf
    res = abs(f1(x1, alpha, alpha_f))
    x2_lo = -2 * (math.log(x1 + eps) + alpha_f * (x1 + eps)) / m
    x2_hi = -2 * (math.log(x1 - eps) + alpha_f * (x1 - eps)) / m if x1 > eps else math.inf
    return ReducedBalanced(x1, x2, res, (x1 - eps, x1 + eps), (x2_lo, x2_hi), not note, note)


def mu_one_sided(x: float, alpha: float, alpha_f: float) -> float:
    m = alpha_f + alpha
    return 2 - x - math.exp(-m * x) * (1 + m * x)


def mu_balanced(x1: float, x2: float, alpha: float, alpha_f: float) -> float:
    h = 0.5 * (alpha_f + alpha)
    e1 = math.exp(-alpha_f * x1 - h * x2)
    e2 = math.exp(-h * x1 - alpha * x2)
    return (
        2
        - 0.5 * x1
        - 0.5 * x2
        - 0.5 * e1 * (1 + alpha_f * x1 + h * x2)
        - 0.5 * e2 * (1 + h * x1 + alpha * x2)
    )


# ---------------------------------------------------------------------------
# second-order directional derivatives at (1/2, 1/2)
# ---------------------------------------------------------------------------


def sod_diag_formula(x1: float, x2: float, alpha: float, alpha_f: float) -> float:
    """d^2/dt^2 of xi(1/2 + t, 1/2 - t) at t = 0."""
    a, af = alpha, alpha_f
    d2 = (af - a) ** 2
    num = d2 * 4 * x1 * x2 * (x1 + x2) - 16 * (x2 - x1) * (af * x1 - a * x2)
    den = d2 * x1 * x2 + 4 * (a * x2 + af * x1 - 1)
    return num / den


def sod_budget_formula(x1: float, x2: float, alpha: float, alpha_f: float) -> float:
    """d^2/dt^2 of xi(1/2, 1/2 + t) at t = 0."""
    a, af = alpha, alpha_f
    q = x1 * x2 * (af - a) ** 2
    num = (
        -2 * (x1 + x2) * q * q
        - 16 * (x1 + x2) * x1 * x2 * af * a
        + 8 * af**2 * x1 * (x2**2 - 3 * x1 * x2 + 4 * x1**2)
        + 8 * a**2 * x2 * (x1**2 - 3 * x1 * x2 + 4 * x2**2)
    )
    den = -q * q + 8 * x1 * x2 * (af + a) ** 2 + 16 * (a**2 * x2**2 + af**2 * x1**2 - 1)
    return num / den


def directional_sod_balanced(alpha: float, alpha_f: float, eps: float = DEFAULT_EPS) -> tuple[float, float]:
    """(sod along (1, -1), sod along (0, 1)) of xi at b = (1/2, 1/2)."""
    r = solve_reduced_balanced(alpha, alpha_f, eps)
    return (
        sod_diag_formula(r.x1, r.x2, alpha, alpha_f),
        sod_budget_formula(r.x1, r.x2, alpha, alpha_f),
    )


def finite_difference_sod(
    alpha: float,
    alpha_f: float,
    center: FlexAllocation,
    direction: tuple[float, float],
    step: float = 1e-3,
    which: str = "mu",
    tol: float = DEFAULT_TOL,
) -> float:
    """Central second difference of mu_ks (or xi, xi_hat) along a direction."""

    def val(t: float) -> float:
        alloc = FlexAllocation(center.b_l + t * direction[0], center.b_r + t * direction[1])
        s = solve_ks_fixed_point(alpha, alpha_f, alloc, tol)
        return {"mu": s.mu_ks, "xi": s.xi, "xi_hat": s.xi_hat}[which]

    return (val(step) - 2 * val(0.0) + val(-step)) / step**2


def ks_gradient(
    alpha: float, alpha_f: float, alloc: FlexAllocation, step: float = 1e-6, tol: float = DEFAULT_TOL
) -> tuple[float, float]:
    """Central-difference gradient of mu_ks in (b_l, b_r)."""
    out = []
    for d in ((1.0, 0.0), (0.0, 1.0)):
        p = FlexAllocation(alloc.b_l + step * d[0], alloc.b_r + step * d[1])
        m = FlexAllocation(alloc.b_l - step * d[0], alloc.b_r - step * d[1])
        out.append((mu_ks(alpha, alpha_f, p, tol) - mu_ks(alpha, alpha_f, m, tol)) / (2 * step))
    return out[0], out[1]


def ratio_balanced_one_sided(alpha: float, alpha_f: float, B: float, tol: float = DEFAULT_TOL) -> Optional[float]:
    den = mu_ks(alpha, alpha_f, FlexAllocation(B, 0.0), tol)
    if den == 0:
        return None
    return mu_ks(alpha, alpha_f, FlexAllocation(B / 2, B / 2), tol) / den
