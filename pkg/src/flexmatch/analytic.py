"""Closed forms and bounds: the non-isolated metric phi and its optimality
criterion, the local (k = 2) model, the cannibalization gap bound and the
asymmetry thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InvalidParamsError
from .graphs import FlexAllocation

TIE_TOL = 1e-12


class Optimal(str, Enum):
    ONE_SIDED = "one_sided"
    BALANCED = "balanced"
    TIE = "tie"


@dataclass(frozen=True)
class PhiValue:
    phi1: float
    phi2: float

    @property
    def phi(self) -> float:
        return 1.0 - max(self.phi1, self.phi2)


def _isolated_fraction(alpha: float, alpha_f: float, b_own: float, b_other: float) -> float:
    """Limit probability that a node on the side with flexibility ``b_own``
    has no neighbour, the opposite side having flexibility ``b_other``."""
    flex = math.exp(-(2 * alpha_f * b_other + (alpha + alpha_f) * (1 - b_other)))
    reg = math.exp(-((alpha + alpha_f) * b_other + 2 * alpha * (1 - b_other)))
    return b_own * flex + (1 - b_own) * reg


def phi_closed_form(alpha: float, alpha_f: float, alloc: FlexAllocation) -> PhiValue:
    if not 0 <= alpha <= alpha_f:
        raise InvalidParamsError("need alpha_f >= alpha >= 0")
    return PhiValue(
        _isolated_fraction(alpha, alpha_f, alloc.b_l, alloc.b_r),
        _isolated_fraction(alpha, alpha_f, alloc.b_r, alloc.b_l),
    )


def phi_star(alpha: float, alpha_f: float, B: float) -> float:
    """Sign of this quantity decides one-sided (>0) against balanced (<0)."""
    d = alpha_f - alpha
    x = math.exp(-d)
    h = B / 2
    return math.exp(-h * d) * (1 - h + h * x) - (1 - B) - B * x


def phi_optimal_allocation(alpha: float, alpha_f: float, B: float, tol: float = TIE_TOL) -> Optimal:
    if not 0 <= B <= 1:
        raise InvalidParamsError("B must lie in [0, 1]")
    if not 0 <= alpha <= alpha_f:
        raise InvalidParamsError("need alpha_f >= alpha >= 0")
    s = phi_star(alpha, alpha_f, B)
    if s > tol:
        return Optimal.ONE_SIDED
    if s < -tol:
        return Optimal.BALANCED
    return Optimal.TIE


# ---------------------------------------------------------------------------
# local model, k = 2
# ---------------------------------------------------------------------------


def _check_local(p: float, p_f: float) -> None:
    if not 0 <= p < p_f <= 0.5:
        raise InvalidParamsError(f"local model needs 0 <= p < p_f <= 1/2, got p={p}, p_f={p_f}")


def local_fixed_point(p: float, p_f: float, alloc: FlexAllocation) -> tuple[float, float]:
    """Stationary probabilities (x_f, x_n) that a flexible / regular right
    node is taken by its left predecessor in the sweep matcher.

    The recursion is affine, ``x = A x + c``, so it is solved directly.  At
    the corner p_f = 1/2, b = (1, 1) the system is singular but consistent
    and mu does not depend on the free coordinate; least squares picks one.
    """
    _check_local(p, p_f)
    bl, br = alloc.b_l, alloc.b_r
    s, m, r = 2 * p_f, p_f + p, 2 * p  # flex-flex, mixed, regular-regular
    w_ff, w_nf, w_fn, w_nn = bl * br, (1 - bl) * br, bl * (1 - br), (1 - bl) * (1 - br)

    # x_f' = f1(x_f, x_n); each bracket is  x*q + (1 - x)*(1 - q0)*q
    # with q0 the probability of the edge to the node's own column.
    def coeffs(q_ff, q_nf, q_fn, q_nn):
        a_f = w_ff * (q_ff - (1 - s) * q_ff) + w_nf * (q_nf - (1 - m) * q_nf)
        a_n = w_fn * (q_fn - (1 - m) * q_fn) + w_nn * (q_nn - (1 - r) * q_nn)
        c = w_ff * (1 - s) * q_ff + w_nf * (1 - m) * q_nf + w_fn * (1 - m) * q_fn + w_nn * (1 - r) * q_nn
        return a_f, a_n, c

    a11, a12, c1 = coeffs(s, m, s, m)
    a21, a22, c2 = coeffs(m, r, m, r)
    A = np.array([[1 - a11, -a12], [-a21, 1 - a22]])
    rhs = np.array([c1, c2])
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) > 1e-14:
        x = np.linalg.solve(A, rhs)
    else:
        x = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return float(x[0]), float(x[1])


def local_model_mu(p: float, p_f: float, alloc: FlexAllocation) -> float:
    xf, xn = local_fixed_point(p, p_f, alloc)
    bl, br = alloc.b_l, alloc.b_r
    return (
        br * xf
        + br * (1 - xf) * ((1 + bl) * p_f + (1 - bl) * p)
        + (1 - br) * xn
        + (1 - br) * (1 - xn) * (bl * p_f + (2 - bl) * p)
    )


def local_model_mu_rational(p: float, p_f: float, alloc: FlexAllocation) -> float:
    """The fully expanded rational expression in (b_l, b_r, p, p_f)."""
    _check_local(p, p_f)
    b, S = alloc.b_l, alloc.b_l + alloc.b_r
    q = p_f
    S2 = S * S
    num = (
        2 * S2 * p**4 * b**2 - 2 * S2 * p**4 * b - 8 * S2 * p**3 * q * b**2 + 8 * S2 * p**3 * q * b
        + 12 * S2 * p**2 * q**2 * b**2
        - 12 * S2 * p**2 * q**2 * b - S2 * p**2 - 8 * S2 * p * q**3 * b**2 + 8 * S2 * p * q**3 * b
        + 2 * S2 * p * q
        + 2 * S2 * q**4 * b**2 - 2 * S2 * q**4 * b - S2 * q**2 - 4 * S * p**4 * b**3 + 2 * S * p**4 * b**2
        + 2 * S * p**4 * b + 16 * S * p**3 * q * b**3 - 8 * S * p**3 * q * b**2 - 8 * S * p**3 * q * b
        - 24 * S * p**2 * q**2 * b**3
        + 12 * S * p**2 * q**2 * b**2 + 12 * S * p**2 * q**2 * b - 2 * S * p**2 * b + 7 * S * p**2
        + 16 * S * p * q**3 * b**3
        - 8 * S * p * q**3 * b**2 - 8 * S * p * q**3 * b + 4 * S * p * q * b - 6 * S * p * q - 2 * S * p
        - 4 * S * q**4 * b**3 + 2 * S * q**4 * b**2 + 2 * S * q**4 * b - 2 * S * q**2 * b - S * q**2
        + 2 * S * q + 2 * p**4 * b**4 - 2 * p**4 * b**2 - 8 * p**3 * q * b**4 + 8 * p**3 * q * b**2
        + 12 * p**2 * q**2 * b**4 - 12 * p**2 * q**2 * b**2
        + 2 * p**2 * b**2 - 8 * p**2 - 8 * p * q**3 * b**4 + 8 * p * q**3 * b**2 - 4 * p * q * b**2 + 4 * p
        + 2 * q**4 * b**4 - 2 * q**4 * b**2 + 2 * q**2 * b**2
    )
    den = (
        S2 * p**4 * b**2 - S2 * p**4 * b - 4 * S2 * p**3 * q * b**2 + 4 * S2 * p**3 * q * b
        + 6 * S2 * p**2 * q**2 * b**2
        - 6 * S2 * p**2 * q**2 * b - 4 * S2 * p * q**3 * b**2 + 4 * S2 * p * q**3 * b + S2 * q**4 * b**2
        - S2 * q**4 * b - 2 * S * p**4 * b**3 + S * p**4 * b**2 + S * p**4 * b + 8 * S * p**3 * q * b**3
        - 4 * S * p**3 * q * b**2
        - 4 * S * p**3 * q * b - 12 * S * p**2 * q**2 * b**3 + 6 * S * p**2 * q**2 * b**2
        + 6 * S * p**2 * q**2 * b - 2 * S * p**2 * b
        + 3 * S * p**2 + 8 * S * p * q**3 * b**3 - 4 * S * p * q**3 * b**2 - 4 * S * p * q**3 * b
        + 4 * S * p * q * b
        - 2 * S * p * q - 2 * S * q**4 * b**3 + S * q**4 * b**2 + S * q**4 * b - 2 * S * q**2 * b
        - S * q**2 + p**4 * b**4 - p**4 * b**2 - 4 * p**3 * q * b**4 + 4 * p**3 * q * b**2
        + 6 * p**2 * q**2 * b**4 - 6 * p**2 * q**2 * b**2 + 2 * p**2 * b**2 - 4 * p**2
        - 4 * p * q**3 * b**4 + 4 * p * q**3 * b**2 - 4 * p * q * b**2 + q**4 * b**4 - q**4 * b**2
        + 2 * q**2 * b**2 + 1
    )
    return num / den


def local_mu_antidiagonal(b_l: float, p: float, p_f: float) -> float:
    """mu(b_l, 1 - b_l) in its reduced form."""
    _check_local(p, p_f)
    N = (
        p_f**2 * b_l**2 - p_f**2 * b_l - 2 * p_f * p * b_l**2 + 2 * p_f * p * b_l + p_f
        + p**2 * b_l**2 - p**2 * b_l + p
    )
    return 2 * N / (N + 1)


# ---------------------------------------------------------------------------
# bounds and thresholds
# ---------------------------------------------------------------------------


def cannibalization_gap_bound(alpha_f: float) -> float:
    if alpha_f <= 0:
        raise InvalidParamsError("alpha_f must be positive")
    return alpha_f**3 / 32.0 * math.exp(-7.0 * alpha_f)


def alpha_star(B: float) -> float:
    if not 0 < B < 1:
        raise InvalidParamsError("B must lie in (0, 1)")
    h = 1 - B / 2
    return min(B * B / (8 * h**3), math.log((2 - B) / B) / (2 * h))


def asymmetry_thresholds(B: float, alpha: float) -> tuple[float, Optional[float]]:
    """(alpha_star(B), alpha_f_star(B, alpha)); the second is None unless
    0 < alpha < alpha_star(B)."""
    a_star = alpha_star(B)
    if not 0 < alpha < a_star:
        return a_star, None
    h = 1 - B / 2
    num = math.log(B) - math.log(2 * alpha * ((B / 2) ** 2 - 2 * alpha * h**3))
    den = h * math.exp(-2 * alpha * h) - B / 2
    return a_star, num / den
