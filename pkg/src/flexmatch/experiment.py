"""Profit landscape g = mu_ks - cost, greedy experimentation trajectories
with step gamma, and classification of stationary points.

Allocations live on [0, 1]^2 without a budget constraint; the cost is
c * (b_l^d + b_r^d).  The solver is not defined at alpha = 0, so a spec
built with alpha = 0 runs at ALPHA_ZERO and records a note.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import InvalidParamsError
from .graphs import FlexAllocation
from .ks_solver import DEFAULT_TOL, directional_sod_balanced, in_certified_regime, solve_ks_fixed_point
from .output import resolve_threads

ALPHA_ZERO = 1e-6
IMPROVE_TOL = 1e-12
FD_STEP = 1e-3
COORD_DIGITS = 12
LANDSCAPE_COLUMNS = ("alpha", "alpha_f", "c", "cost_exponent", "b_l", "b_r", "mu_ks", "cost", "profit")

# candidate order doubles as the tie-break: b_l moves, then b_r moves, then diagonals
AXIS_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))
DIAGONAL_MOVES = ((1, 1), (1, -1), (-1, 1), (-1, -1))


class Mode(str, Enum):
    COORDINATE = "coordinate"
    SIMULTANEOUS = "simultaneous"
    JOINT = "joint"


class TerminalClass(str, Enum):
    LOCAL_NE = "local_NE"
    SADDLE_SUSPECT = "saddle_suspect"
    BOUNDARY = "boundary"
    GLOBAL_CANDIDATE = "global_candidate"


class PointClass(str, Enum):
    LOCAL_NE = "local_NE"
    SADDLE = "saddle"
    LOCAL_MAX = "local_max"
    NONE = "none"


@dataclass(frozen=True)
class ProfitSpec:
    alpha: float
    alpha_f: float
    c: float
    cost_exponent: float = 1.0
    note: str = ""

    def __post_init__(self) -> None:
        if self.alpha == 0:
            object.__setattr__(self, "alpha", ALPHA_ZERO)
            object.__setattr__(self, "note", f"alpha=0 evaluated at alpha={ALPHA_ZERO:g}")
        self.validate()

    def validate(self) -> None:
        if not (math.isfinite(self.c) and self.c >= 0):
            raise InvalidParamsError("c must be a finite nonnegative number")
        if not (math.isfinite(self.cost_exponent) and self.cost_exponent >= 1):
            raise InvalidParamsError("cost_exponent must be >= 1")
        if not (self.alpha_f > self.alpha >= 0):
            raise InvalidParamsError("need alpha_f > alpha >= 0")

    def to_dict(self) -> dict:
        return dict(alpha=self.alpha, alpha_f=self.alpha_f, c=self.c, cost_exponent=self.cost_exponent, note=self.note)


def cost(spec: ProfitSpec, alloc: FlexAllocation) -> float:
    d = spec.cost_exponent
    return spec.c * (alloc.b_l**d + alloc.b_r**d)


def profit(spec: ProfitSpec, alloc: FlexAllocation, tol: float = DEFAULT_TOL) -> float:
    return solve_ks_fixed_point(spec.alpha, spec.alpha_f, alloc, tol).mu_ks - cost(spec, alloc)


class _Surface:
    """Memoized profit on rounded coordinates."""

    def __init__(self, spec: ProfitSpec):
        self.spec = spec
        self.cache: dict = {}

    def __call__(self, bl: float, br: float) -> float:
        key = (round(bl, COORD_DIGITS), round(br, COORD_DIGITS))
        if key not in self.cache:
            self.cache[key] = profit(self.spec, FlexAllocation(*key))
        return self.cache[key]


def _inside(bl: float, br: float) -> bool:
    return -1e-12 <= bl <= 1 + 1e-12 and -1e-12 <= br <= 1 + 1e-12


def _probe(g: _Surface, bl: float, br: float, step: float, moves) -> list:
    """Improvement of each in-bounds move (None when out of bounds)."""
    base = g(bl, br)
    out = []
    for dl, dr in moves:
        nl, nr = round(bl + dl * step, COORD_DIGITS), round(br + dr * step, COORD_DIGITS)
        out.append(g(min(max(nl, 0.0), 1.0), min(max(nr, 0.0), 1.0)) - base if _inside(nl, nr) else None)
    return out


def _improves(deltas) -> bool:
    return any(d is not None and d > IMPROVE_TOL for d in deltas)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    spec: ProfitSpec
    points: list  # (b_l, b_r, g)
    gamma: float
    mode: Mode
    terminal: tuple
    terminal_class: TerminalClass
    steps: int
    converged: bool  # False when max_steps or a cycle stopped the walk
    cycled: bool = False
    evaluations: int = field(default=0, compare=False)

    def to_dict(self) -> dict:
        return dict(
            spec=self.spec.to_dict(),
            points=[list(p) for p in self.points],
            gamma=self.gamma,
            mode=self.mode.value,
            terminal=list(self.terminal),
            terminal_class=self.terminal_class.value,
            steps=self.steps,
            converged=self.converged,
            cycled=self.cycled,
        )


def _best(deltas, moves):
    best, arg = IMPROVE_TOL, None
    for d, mv in zip(deltas, moves):
        if d is not None and d > best:
            best, arg = d, mv
    return arg


def _lattice_max(g: _Surface, start: tuple, gamma: float) -> float:
    """Largest profit over the gamma-lattice through ``start`` inside [0,1]^2."""
    def axis(s):
        lo = -math.floor(s / gamma + 1e-9)
        hi = math.floor((1 - s) / gamma + 1e-9)
        return [round(s + k * gamma, COORD_DIGITS) for k in range(lo, hi + 1)]

    return max(g(a, b) for a in axis(start[0]) for b in axis(start[1]))


def classify_terminal(g: _Surface, bl: float, br: float, gamma: float, start: tuple) -> TerminalClass:
    """Label of the stopping point; an equilibrium statement only when the
    walk converged."""
    axis = _probe(g, bl, br, gamma, AXIS_MOVES)
    diag = _probe(g, bl, br, gamma, DIAGONAL_MOVES)
    if not _improves(axis) and _improves(diag):
        return TerminalClass.SADDLE_SUSPECT
    if g(bl, br) >= _lattice_max(g, start, gamma) - IMPROVE_TOL:
        return TerminalClass.GLOBAL_CANDIDATE
    if min(bl, br) <= 1e-12 or max(bl, br) >= 1 - 1e-12:
        return TerminalClass.BOUNDARY
    return TerminalClass.LOCAL_NE


def run_trajectory(
    spec: ProfitSpec,
    start: FlexAllocation,
    gamma: float,
    mode: "Mode | str" = Mode.COORDINATE,
    max_steps: int = 10_000,
) -> Trajectory:
    """Greedy ascent with moves of size gamma.

    Coordinate mode lets the two sides take turns (b_l first); on its turn
    a side moves by +-gamma when that strictly improves g, and the walk
    stops once neither side can improve.  Simultaneous mode applies both
    sides' best unilateral moves at once; g need not increase, and the walk
    stops with ``cycled`` set when it returns to a visited point.  Joint
    mode takes the best of the eight compass moves.  Moves that leave
    [0, 1]^2 are not allowed.
    """
    mode = Mode(mode)
    if not (math.isfinite(gamma) and gamma > 0):
        raise InvalidParamsError("gamma must be positive")
    if max_steps < 0:
        raise InvalidParamsError("max_steps must be >= 0")
    g = _Surface(spec)
    bl, br = round(start.b_l, COORD_DIGITS), round(start.b_r, COORD_DIGITS)
    points = [(bl, br, g(bl, br))]
    steps, turn, idle = 0, 0, 0
    converged = cycled = False
    visited = {(bl, br)}
    while steps < max_steps:
        if mode is Mode.COORDINATE:
            moves = AXIS_MOVES[2 * turn : 2 * turn + 2]
            mv = _best(_probe(g, bl, br, gamma, moves), moves)
            turn = 1 - turn
            if mv is None:
                idle += 1
                if idle == 2:
                    converged = True
                    break
                continue
            idle = 0
        elif mode is Mode.SIMULTANEOUS:
            ml = _best(_probe(g, bl, br, gamma, AXIS_MOVES[:2]), AXIS_MOVES[:2])
            mr = _best(_probe(g, bl, br, gamma, AXIS_MOVES[2:]), AXIS_MOVES[2:])
            if ml is None and mr is None:
                converged = True
                break
            mv = ((ml or (0, 0))[0], (mr or (0, 0))[1])
        else:
            moves = AXIS_MOVES + DIAGONAL_MOVES
            mv = _best(_probe(g, bl, br, gamma, moves), moves)
            if mv is None:
                converged = True
                break
        nl = min(max(round(bl + mv[0] * gamma, COORD_DIGITS), 0.0), 1.0)
        nr = min(max(round(br + mv[1] * gamma, COORD_DIGITS), 0.0), 1.0)
        if mode is Mode.SIMULTANEOUS and (nl, nr) in visited:
            cycled = True
            break
        bl, br = nl, nr
        visited.add((bl, br))
        points.append((bl, br, g(bl, br)))
        steps += 1
    if not (converged or cycled):
        moves = AXIS_MOVES + DIAGONAL_MOVES if mode is Mode.JOINT else AXIS_MOVES
        converged = not _improves(_probe(g, bl, br, gamma, moves))
    cls = classify_terminal(g, bl, br, gamma, (points[0][0], points[0][1]))
    return Trajectory(spec, points, gamma, mode, (bl, br), cls, steps, converged, cycled, len(g.cache))


# ---------------------------------------------------------------------------
# stationary points
# ---------------------------------------------------------------------------


def _cost_sod(spec: ProfitSpec, alloc: FlexAllocation, direction: tuple) -> float:
    d, c = spec.cost_exponent, spec.c
    if d == 1:
        return 0.0
    k = d * (d - 1)
    return c * k * (direction[0] ** 2 * alloc.b_l ** (d - 2) + direction[1] ** 2 * alloc.b_r ** (d - 2))


def profit_sod(spec: ProfitSpec, alloc: FlexAllocation, direction: tuple, step: float = FD_STEP) -> float:
    """Second directional derivative of g.  At (1/2, 1/2) inside the
    certified regime the exact formulas are used; elsewhere a central
    difference of mu_ks with the given step."""
    at_center = abs(alloc.b_l - 0.5) < 1e-12 and abs(alloc.b_r - 0.5) < 1e-12
    if at_center and in_certified_regime(spec.alpha, spec.alpha_f) and tuple(direction) in ((1, -1), (0, 1), (1, 0)):
        diag, budget = directional_sod_balanced(spec.alpha, spec.alpha_f)
        mu2 = diag if tuple(direction) == (1, -1) else budget
    else:
        g = _Surface(ProfitSpec(spec.alpha, spec.alpha_f, 0.0))

        def at(t):
            return g(alloc.b_l + t * direction[0], alloc.b_r + t * direction[1])

        mu2 = (at(step) - 2 * at(0.0) + at(-step)) / step**2
    return mu2 - _cost_sod(spec, alloc, direction)


def classify_stationary_point(spec: ProfitSpec, alloc: FlexAllocation, probe_step: float = FD_STEP) -> PointClass:
    """local_max: no probe in the eight directions improves g.  local_NE: no
    single-coordinate probe improves.  saddle: local_NE with an improving
    diagonal probe, g concave along both axes and convex along (1, -1).
    Allocations whose probes would leave the open unit square give none."""
    if not (probe_step > 0 and probe_step <= alloc.b_l <= 1 - probe_step and probe_step <= alloc.b_r <= 1 - probe_step):
        return PointClass.NONE
    g = _Surface(spec)
    axis = _probe(g, alloc.b_l, alloc.b_r, probe_step, AXIS_MOVES)
    diag = _probe(g, alloc.b_l, alloc.b_r, probe_step, DIAGONAL_MOVES)
    if _improves(axis):
        return PointClass.NONE
    if not _improves(diag):
        return PointClass.LOCAL_MAX
    signs = (
        profit_sod(spec, alloc, (1, 0)) < 0
        and profit_sod(spec, alloc, (0, 1)) < 0
        and profit_sod(spec, alloc, (1, -1)) > 0
    )
    return PointClass.SADDLE if signs else PointClass.LOCAL_NE


def is_local_ne(cls: PointClass) -> bool:
    return cls in (PointClass.LOCAL_NE, PointClass.SADDLE, PointClass.LOCAL_MAX)


# ---------------------------------------------------------------------------
# landscape
# ---------------------------------------------------------------------------


def landscape_grid(
    spec: ProfitSpec, resolution: int, threads: Union[int, str, None] = 1, tol: float = DEFAULT_TOL
) -> list[dict]:
    """g over a resolution x resolution grid of [0,1]^2, rows in (b_l, b_r) order."""
    if resolution < 2:
        raise InvalidParamsError("resolution must be >= 2")
    ticks = [round(i / (resolution - 1), COORD_DIGITS) for i in range(resolution)]
    cells = [(a, b) for a in ticks for b in ticks]

    def row(ab):
        alloc = FlexAllocation(*ab)
        mu = solve_ks_fixed_point(spec.alpha, spec.alpha_f, alloc, tol).mu_ks
        k = cost(spec, alloc)
        return dict(
            alpha=spec.alpha, alpha_f=spec.alpha_f, c=spec.c, cost_exponent=spec.cost_exponent,
            b_l=ab[0], b_r=ab[1], mu_ks=mu, cost=k, profit=mu - k,
        )

    nthreads = resolve_threads(threads)
    if nthreads <= 1:
        return [row(ab) for ab in cells]
    with ThreadPoolExecutor(max_workers=nthreads) as pool:
        return list(pool.map(row, cells))


@dataclass(frozen=True)
class ProfitComparison:
    local_alloc: tuple
    local_profit: float
    global_alloc: tuple
    global_profit: float

    @property
    def ratio(self) -> float:
        return self.local_profit / self.global_profit if self.global_profit > 0 else math.nan

    def to_dict(self) -> dict:
        return dict(
            local_alloc=list(self.local_alloc), local_profit=self.local_profit,
            global_alloc=list(self.global_alloc), global_profit=self.global_profit, ratio=self.ratio,
        )


def balanced_vs_global(spec: ProfitSpec, points: int = 201, tol: float = DEFAULT_TOL) -> ProfitComparison:
    """Best balanced allocation (t, t) against the best allocation on the
    two one-sided edges and the diagonal, each sampled at ``points`` values."""
    ts = np.linspace(0.0, 1.0, points)
    diag = np.array([profit(spec, FlexAllocation(t, t), tol) for t in ts])
    one = np.array([profit(spec, FlexAllocation(t, 0.0), tol) for t in ts])
    i, j = int(np.argmax(diag)), int(np.argmax(one))
    if diag[i] >= one[j]:
        glob = ((float(ts[i]), float(ts[i])), float(diag[i]))
    else:
        glob = ((float(ts[j]), 0.0), float(one[j]))
    return ProfitComparison((float(ts[i]), float(ts[i])), float(diag[i]), glob[0], glob[1])


def one_sided_vs_global(spec: ProfitSpec, points: int = 201, tol: float = DEFAULT_TOL) -> ProfitComparison:
    """Best point on the one-sided edge (t, 0) against the best over the
    one-sided edge and the diagonal."""
    ts = np.linspace(0.0, 1.0, points)
    diag = np.array([profit(spec, FlexAllocation(t, t), tol) for t in ts])
    one = np.array([profit(spec, FlexAllocation(t, 0.0), tol) for t in ts])
    j = int(np.argmax(one))
    i = int(np.argmax(diag))
    glob = ((float(ts[i]), float(ts[i])), float(diag[i])) if diag[i] >= one[j] else ((float(ts[j]), 0.0), float(one[j]))
    return ProfitComparison((float(ts[j]), 0.0), float(one[j]), glob[0], glob[1])




def budget_line_profile(spec: ProfitSpec, B: float, points: int = 101, tol: float = DEFAULT_TOL) -> list[dict]:
    """Profit along b_l + b_r = B, parametrized by the share s = b_l / B."""
    if not 0 < B <= 1:
        raise InvalidParamsError("B must lie in (0, 1]")
    if points < 2:
        raise InvalidParamsError("points must be >= 2")
    rows = []
    for i in range(points):
        s = i / (points - 1)
        alloc = FlexAllocation(B * s, B - B * s)
        rows.append(dict(share=s, b_l=alloc.b_l, b_r=alloc.b_r, profit=profit(spec, alloc, tol)))
    return rows


def budget_line_category(spec: ProfitSpec, B: float, points: int = 101, tol: float = 1e-9) -> str:
    """'one_sided', 'balanced' or 'interior' according to where the profit
    along the budget line peaks (ties within ``tol`` of the best count)."""
    rows = budget_line_profile(spec, B, points)
    best = max(r["profit"] for r in rows)
    ends = max(rows[0]["profit"], rows[-1]["profit"])
    mid = rows[(points - 1) // 2]["profit"] if points % 2 else -math.inf
    if ends >= best - tol:
        return "one_sided"
    if mid >= best - tol:
        return "balanced"
    return "interior"


__all__ = [
    "ALPHA_ZERO",
    "LANDSCAPE_COLUMNS",
    "Mode",
    "TerminalClass",
    "PointClass",
    "ProfitSpec",
    "Trajectory",
    "ProfitComparison",
    "cost",
    "profit",
    "profit_sod",
    "run_trajectory",
    "classify_terminal",
    "classify_stationary_point",
    "is_local_ne",
    "landscape_grid",
    "balanced_vs_global",
    "one_sided_vs_global",
    "budget_line_profile",
    "budget_line_category",
]
