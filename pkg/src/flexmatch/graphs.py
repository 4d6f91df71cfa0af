"""Parameter types, the bipartite graph container and the random generators.

Five graph laws are provided:

* ``base``       every pair (i, j) is an edge independently with probability
                 ``2p + (F_l[i] + F_r[j]) (p_f - p)`` where ``p = alpha/n`` and
                 ``p_f = alpha_f/n``.
* ``local``      the same additive law with ``p = alpha/k``, restricted to
                 pairs with ``(j - i) mod n <= k - 1``.
* ``spatial``    nodes are uniform points in the unit square and (i, j) is an
                 edge iff their distance is at most the additive threshold with
                 ``p = alpha/sqrt(n)``.
* ``imbalanced`` the right side has ``round(lam * n)`` nodes and left nodes
                 are flexible with probability ``b_l * lam``.
* ``weighted``   each pair draws ``w ~ U(0, 1)`` and is eligible iff ``w``
                 exceeds one minus the base edge probability of its type pair;
                 eligible edges carry weight ``w - 0.8``.

Sparse laws use geometric skips over each right-type stratum, so the work is
proportional to the number of realized edges.  ``sample_dense_reference``
draws the full Bernoulli matrix instead and exists for distributional tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional, Sequence

import numba
import numpy as np

from .errors import InvalidParamsError, ProbabilityOverflowError
from .rng import RngSeed, as_seed, make_generator


class Variant(str, Enum):
    BASE = "base"
    LOCAL = "local"
    SPATIAL = "spatial"
    IMBALANCED = "imbalanced"
    WEIGHTED = "weighted"


@dataclass(frozen=True)
class ModelParams:
    """Edge intensities and size.  ``k`` and ``lam`` are variant extras."""

    alpha: float
    alpha_f: float
    n: int
    k: Optional[int] = None
    lam: Optional[float] = None

    def validate(self, variant: "Variant | str" = Variant.BASE) -> None:
        variant = Variant(variant)
        a, af, n = self.alpha, self.alpha_f, self.n
        if not (isinstance(n, (int, np.integer)) and n >= 1):
            raise InvalidParamsError(f"n must be a positive integer, got {n!r}")
        if not (math.isfinite(a) and math.isfinite(af)):
            raise InvalidParamsError("alpha and alpha_f must be finite")
        if not 0 <= a < af:
            raise InvalidParamsError(f"need alpha_f > alpha >= 0, got alpha={a}, alpha_f={af}")
        if variant is Variant.LOCAL:
            k = self.k
            if k is None or not (isinstance(k, (int, np.integer)) and 1 <= k <= n):
                raise InvalidParamsError(f"local model needs an integer 1 <= k <= n, got {k!r}")
            if af / k > 0.5:
                raise InvalidParamsError(f"local model needs alpha_f/k <= 1/2, got {af / k}")
        elif variant is Variant.SPATIAL:
            if 2 * af / math.sqrt(n) > math.sqrt(2):
                raise InvalidParamsError("spatial radius 2*alpha_f/sqrt(n) exceeds the square diagonal")
        else:
            if 2 * af / n > 1:
                raise ProbabilityOverflowError(f"edge probability 2*alpha_f/n = {2 * af / n} exceeds 1")
        if variant is Variant.IMBALANCED:
            lam = self.lam
            if lam is None or not 0 < lam <= 1:
                raise InvalidParamsError(f"imbalanced model needs lam in (0, 1], got {lam!r}")
            if right_size(n, lam) < 1:
                raise InvalidParamsError("round(lam * n) must be at least 1")


def right_size(n: int, lam: Optional[float]) -> int:
    # Python's round() is round-half-to-even.
    return n if lam is None else int(round(lam * n))


@dataclass(frozen=True)
class FlexAllocation:
    b_l: float
    b_r: float

    def __post_init__(self) -> None:
        for name in ("b_l", "b_r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise InvalidParamsError(f"{name} must lie in [0, 1], got {v!r}")

    @property
    def B(self) -> float:
        return self.b_l + self.b_r

    def swapped(self) -> "FlexAllocation":
        return FlexAllocation(self.b_r, self.b_l)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Sparse bipartite graph in compressed-row form.

    Row ``i`` of the adjacency is ``indices[indptr[i]:indptr[i+1]]``, sorted
    and duplicate-free.  ``weights`` (if any) is aligned with ``indices``.
    """

    n_left: int
    n_right: int
    flex_left: np.ndarray
    flex_right: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: Optional[np.ndarray] = None
    positions_left: Optional[np.ndarray] = None
    positions_right: Optional[np.ndarray] = None
    _right_csr: Any = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        set_(self, "flex_left", _frozen(np.asarray(self.flex_left, dtype=np.bool_)))
        set_(self, "flex_right", _frozen(np.asarray(self.flex_right, dtype=np.bool_)))
        set_(self, "indptr", _frozen(np.asarray(self.indptr, dtype=np.int64)))
        set_(self, "indices", _frozen(np.asarray(self.indices, dtype=np.int64)))
        for name in ("weights", "positions_left", "positions_right"):
            v = getattr(self, name)
            if v is not None:
                set_(self, name, _frozen(np.asarray(v, dtype=np.float64)))
        if self.flex_left.shape != (self.n_left,) or self.flex_right.shape != (self.n_right,):
            raise InvalidParamsError("flag vectors do not match side sizes")
        if self.indptr.shape != (self.n_left + 1,) or self.indptr[0] != 0:
            raise InvalidParamsError("malformed indptr")
        if self.indptr[-1] != self.indices.shape[0]:
            raise InvalidParamsError("indptr does not cover indices")
        if self.weights is not None and self.weights.shape != self.indices.shape:
            raise InvalidParamsError("weights must align with indices")

    # -- construction ---------------------------------------------------
    @classmethod
    def from_edges(
        cls,
        n_left: int,
        n_right: int,
        edges: Iterable[Sequence[int]],
        weights: Optional[Iterable[float]] = None,
        flex_left: Optional[Sequence[bool]] = None,
        flex_right: Optional[Sequence[bool]] = None,
    ) -> "BipartiteGraph":
        """Build from (left, right) pairs; duplicates keep the first weight."""
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        w = None if weights is None else np.asarray(list(weights), dtype=np.float64)
        if e.size and (e.min() < 0 or e[:, 0].max() >= n_left or e[:, 1].max() >= n_right):
            raise InvalidParamsError("edge endpoint out of range")
        order = np.lexsort((e[:, 1], e[:, 0]))
        e = e[order]
        if w is not None:
            w = w[order]
        keep = np.ones(len(e), dtype=bool)
        keep[1:] = np.any(e[1:] != e[:-1], axis=1)
        e = e[keep]
        if w is not None:
            w = w[keep]
        indptr = np.zeros(n_left + 1, dtype=np.int64)
        np.cumsum(np.bincount(e[:, 0], minlength=n_left), out=indptr[1:])
        fl = np.zeros(n_left, bool) if flex_left is None else np.asarray(flex_left, bool)
        fr = np.zeros(n_right, bool) if flex_right is None else np.asarray(flex_right, bool)
        return cls(n_left, n_right, fl, fr, indptr, e[:, 1].copy(), w)

    # -- views ----------------------------------------------------------
    @property
    def num_edges(self) -> int:
        return int(self.indices.shape[0])

    @property
    def is_weighted(self) -> bool:
        return self.weights is not None

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(i).tolist() for i in range(self.n_left)]

    def edges(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.n_left, dtype=np.int64), np.diff(self.indptr))
        return np.column_stack((rows, self.indices))

    def degrees_left(self) -> np.ndarray:
        return np.diff(self.indptr)

    def degrees_right(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.n_right)

    def right_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Transposed adjacency: (indptr, left indices, edge ids)."""
        if self._right_csr is None:
            order = np.argsort(self.indices, kind="stable")
            rows = np.repeat(np.arange(self.n_left, dtype=np.int64), np.diff(self.indptr))
            ptr = np.zeros(self.n_right + 1, dtype=np.int64)
            np.cumsum(self.degrees_right(), out=ptr[1:])
            object.__setattr__(self, "_right_csr", (ptr, rows[order], order.astype(np.int64)))
        return self._right_csr

    def edge_weight(self, i: int, j: int) -> Optional[float]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        pos = lo + int(np.searchsorted(self.indices[lo:hi], j))
        if pos < hi and self.indices[pos] == j:
            return None if self.weights is None else float(self.weights[pos])
        raise KeyError((i, j))

    def has_edge(self, i: int, j: int) -> bool:
        row = self.neighbors(i)
        pos = int(np.searchsorted(row, j))
        return pos < row.shape[0] and row[pos] == j

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        def rows(values: np.ndarray) -> list:
            return [values[self.indptr[i] : self.indptr[i + 1]].tolist() for i in range(self.n_left)]

        return {
            "n_left": self.n_left,
            "n_right": self.n_right,
            "flex_left": self.flex_left.astype(int).tolist(),
            "flex_right": self.flex_right.astype(int).tolist(),
            "adjacency": rows(self.indices),
            "weights": None if self.weights is None else rows(self.weights),
            "positions_left": None if self.positions_left is None else self.positions_left.tolist(),
            "positions_right": None if self.positions_right is None else self.positions_right.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "BipartiteGraph":
        adj = d["adjacency"]
        indptr = np.zeros(len(adj) + 1, dtype=np.int64)
        np.cumsum([len(r) for r in adj], out=indptr[1:])
        indices = np.array([j for r in adj for j in r], dtype=np.int64)
        weights = None
        if d.get("weights") is not None:
            weights = np.array([w for r in d["weights"] for w in r], dtype=np.float64)
        for r in adj:
            if any(b <= a for a, b in zip(r, r[1:])):
                raise InvalidParamsError("adjacency rows must be sorted and duplicate-free")
        if indices.size and indices.max() >= d["n_right"]:
            raise InvalidParamsError("right index out of range")
        pl, pr = d.get("positions_left"), d.get("positions_right")
        return cls(
            int(d["n_left"]),
            int(d["n_right"]),
            np.asarray(d["flex_left"], dtype=bool),
            np.asarray(d["flex_right"], dtype=bool),
            indptr,
            indices,
            weights,
            None if pl is None else np.asarray(pl, dtype=np.float64).reshape(-1, 2),
            None if pr is None else np.asarray(pr, dtype=np.float64).reshape(-1, 2),
        )

    @classmethod
    def from_json(cls, text: str) -> "BipartiteGraph":
        return cls.from_dict(json.loads(text))

    def same_as(self, other: "BipartiteGraph") -> bool:
        """Exact structural and bitwise equality."""
        def eq(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.array_equal(a, b))

        return (
            self.n_left == other.n_left
            and self.n_right == other.n_right
            and eq(self.flex_left, other.flex_left)
            and eq(self.flex_right, other.flex_right)
            and eq(self.indptr, other.indptr)
            and eq(self.indices, other.indices)
            and eq(self.weights, other.weights)
            and eq(self.positions_left, other.positions_left)
            and eq(self.positions_right, other.positions_right)
        )


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _grow(buf, size):
    if size < buf.shape[0]:
        return buf
    new = np.empty(max(16, 2 * buf.shape[0]), dtype=buf.dtype)
    new[:size] = buf[:size]
    return new


@numba.njit(cache=True, nogil=True)
def _insertion_sort(keys, vals, lo, hi, with_vals):
    # rows are two short sorted runs, where insertion sort beats argsort
    for a in range(lo + 1, hi):
        k = keys[a]
        v = vals[a] if with_vals else 0.0
        b = a - 1
        while b >= lo and keys[b] > k:
            keys[b + 1] = keys[b]
            if with_vals:
                vals[b + 1] = vals[b]
            b -= 1
        keys[b + 1] = k
        if with_vals:
            vals[b + 1] = v


@numba.njit(cache=True, nogil=True)
def _sample_typed(rng, flex_left, flex_right, probs, want_weights):
    n_left = flex_left.shape[0]
    strata_flex = np.nonzero(flex_right)[0]
    strata_reg = np.nonzero(~flex_right)[0]
    indptr = np.zeros(n_left + 1, dtype=np.int64)
    cap = 64
    indices = np.empty(cap, dtype=np.int64)
    weights = np.empty(cap if want_weights else 0, dtype=np.float64)
    size = 0
    for i in range(n_left):
        fl = 1 if flex_left[i] else 0
        start = size
        for s in range(2):
            stratum = strata_flex if s == 1 else strata_reg
            m = stratum.shape[0]
            q = probs[fl, s]
            if q <= 0.0 or m == 0:
                continue
            lq = math.log1p(-q) if q < 1.0 else 0.0
            pos = -1
            while True:
                if q >= 1.0:
                    pos += 1
                else:
                    # inversion: Geometric(q) = ceil(log(1 - U) / log(1 - q))
                    pos += max(1, int(math.ceil(math.log1p(-rng.random()) / lq)))
                if pos >= m:
                    break
                if size >= indices.shape[0]:
                    indices = _grow(indices, size)
                    if want_weights:
                        weights = _grow(weights, size)
                indices[size] = stratum[pos]
                if want_weights:
                    # conditional on eligibility the utility is U(1 - q, 1)
                    weights[size] = (1.0 - q * rng.random()) - 0.8
                size += 1
        _insertion_sort(indices, weights, start, size, want_weights)
        indptr[i + 1] = size
    if want_weights:
        return indptr, indices[:size].copy(), weights[:size].copy()
    return indptr, indices[:size].copy(), weights


@numba.njit(cache=True, nogil=True)
def _sample_local(rng, flex_left, flex_right, probs, k):
    n = flex_left.shape[0]
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = np.empty(64, dtype=np.int64)
    size = 0
    for i in range(n):
        fl = 1 if flex_left[i] else 0
        start = size
        for d in range(k):
            j = (i + d) % n
            fr = 1 if flex_right[j] else 0
            if rng.random() < probs[fl, fr]:
                if size >= indices.shape[0]:
                    indices = _grow(indices, size)
                indices[size] = j
                size += 1
        if size - start > 1:
            indices[start:size] = np.sort(indices[start:size])
        indptr[i + 1] = size
    return indptr, indices[:size].copy()


@numba.njit(cache=True, nogil=True)
def _spatial_edges(pos_l, pos_r, flex_left, flex_right, radii):
    n_left = pos_l.shape[0]
    n_right = pos_r.shape[0]
    indptr = np.zeros(n_left + 1, dtype=np.int64)
    indices = np.empty(64, dtype=np.int64)
    size = 0
    for i in range(n_left):
        fl = 1 if flex_left[i] else 0
        for j in range(n_right):
            fr = 1 if flex_right[j] else 0
            dx = pos_l[i, 0] - pos_r[j, 0]
            dy = pos_l[i, 1] - pos_r[j, 1]
            if math.sqrt(dx * dx + dy * dy) <= radii[fl, fr]:
                if size >= indices.shape[0]:
                    indices = _grow(indices, size)
                indices[size] = j
                size += 1
        indptr[i + 1] = size
    return indptr, indices[:size].copy()


def spatial_distance(p: Sequence[float], q: Sequence[float]) -> float:
    """Distance used by the spatial edge predicate (same float expression)."""
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    return math.sqrt(dx * dx + dy * dy)


# ---------------------------------------------------------------------------
# edge laws
# ---------------------------------------------------------------------------


def additive_table(p: float, p_f: float) -> np.ndarray:
    """Table ``T[fl, fr] = 2p + (fl + fr)(p_f - p)``."""
    t = np.empty((2, 2), dtype=np.float64)
    for fl in range(2):
        for fr in range(2):
            t[fl, fr] = 2 * p + (fl + fr) * (p_f - p)
    return t


def edge_probabilities(params: ModelParams, variant: "Variant | str" = Variant.BASE) -> np.ndarray:
    variant = Variant(variant)
    if variant is Variant.LOCAL:
        return additive_table(params.alpha / params.k, params.alpha_f / params.k)
    if variant is Variant.SPATIAL:
        s = math.sqrt(params.n)
        return additive_table(params.alpha / s, params.alpha_f / s)
    return additive_table(params.alpha / params.n, params.alpha_f / params.n)


def _flags(rng: np.random.Generator, size: int, prob: float) -> np.ndarray:
    return rng.random(size) < prob


# ---------------------------------------------------------------------------
# public generators
# ---------------------------------------------------------------------------


def sample_base_graph(params: ModelParams, alloc: FlexAllocation, seed: "RngSeed | int") -> BipartiteGraph:
    params.validate(Variant.BASE)
    rng = make_generator(as_seed(seed))
    n = params.n
    fl = _flags(rng, n, alloc.b_l)
    fr = _flags(rng, n, alloc.b_r)
    indptr, indices, _ = _sample_typed(rng, fl, fr, edge_probabilities(params), False)
    return BipartiteGraph(n, n, fl, fr, indptr, indices)


def sample_imbalanced_graph(params: ModelParams, alloc: FlexAllocation, seed: "RngSeed | int") -> BipartiteGraph:
    params.validate(Variant.IMBALANCED)
    lam = float(params.lam)
    if alloc.b_l * lam > 1:
        raise InvalidParamsError("b_l * lam exceeds 1")
    rng = make_generator(as_seed(seed))
    n, m = params.n, right_size(params.n, lam)
    fl = _flags(rng, n, alloc.b_l * lam)
    fr = _flags(rng, m, alloc.b_r)
    indptr, indices, _ = _sample_typed(rng, fl, fr, edge_probabilities(params), False)
    return BipartiteGraph(n, m, fl, fr, indptr, indices)


def sample_weighted_graph(params: ModelParams, alloc: FlexAllocation, seed: "RngSeed | int") -> BipartiteGraph:
    params.validate(Variant.WEIGHTED)
    rng = make_generator(as_seed(seed))
    n = params.n
    fl = _flags(rng, n, alloc.b_l)
    fr = _flags(rng, n, alloc.b_r)
    indptr, indices, weights = _sample_typed(rng, fl, fr, edge_probabilities(params), True)
    return BipartiteGraph(n, n, fl, fr, indptr, indices, weights)


def sample_local_graph(params: ModelParams, alloc: FlexAllocation, seed: "RngSeed | int") -> BipartiteGraph:
    params.validate(Variant.LOCAL)
    rng = make_generator(as_seed(seed))
    n = params.n
    fl = _flags(rng, n, alloc.b_l)
    fr = _flags(rng, n, alloc.b_r)
    indptr, indices = _sample_local(rng, fl, fr, edge_probabilities(params, Variant.LOCAL), int(params.k))
    return BipartiteGraph(n, n, fl, fr, indptr, indices)


def sample_spatial_graph(params: ModelParams, alloc: FlexAllocation, seed: "RngSeed | int") -> BipartiteGraph:
    params.validate(Variant.SPATIAL)
    rng = make_generator(as_seed(seed))
    n = params.n
    fl = _flags(rng, n, alloc.b_l)
    fr = _flags(rng, n, alloc.b_r)
    pos_l = rng.random((n, 2))
    pos_r = rng.random((n, 2))
    radii = edge_probabilities(params, Variant.SPATIAL)
    indptr, indices = _spatial_edges(pos_l, pos_r, fl, fr, radii)
    return BipartiteGraph(n, n, fl, fr, indptr, indices, None, pos_l, pos_r)


_SAMPLERS = {
    Variant.BASE: sample_base_graph,
    Variant.LOCAL: sample_local_graph,
    Variant.SPATIAL: sample_spatial_graph,
    Variant.IMBALANCED: sample_imbalanced_graph,
    Variant.WEIGHTED: sample_weighted_graph,
}


def sample_graph(
    variant: "Variant | str", params: ModelParams, alloc: FlexAllocation, seed: "RngSeed | int"
) -> BipartiteGraph:
    return _SAMPLERS[Variant(variant)](params, alloc, seed)


def sample_dense_reference(
    params: ModelParams, alloc: FlexAllocation, seed: "RngSeed | int", variant: "Variant | str" = Variant.BASE
) -> BipartiteGraph:
    """O(n_left * n_right) Bernoulli-matrix generator for the base,
    imbalanced and local laws.  Used to cross-check the sparse samplers."""
    variant = Variant(variant)
    if variant not in (Variant.BASE, Variant.IMBALANCED, Variant.LOCAL):
        raise InvalidParamsError(f"no dense reference for variant {variant.value}")
    params.validate(variant)
    rng = make_generator(as_seed(seed))
    n = params.n
    lam = params.lam if variant is Variant.IMBALANCED else None
    m = right_size(n, lam)
    fl = _flags(rng, n, alloc.b_l * (lam if lam is not None else 1.0))
    fr = _flags(rng, m, alloc.b_r)
    table = edge_probabilities(params, variant)
    prob = table[fl.astype(int)[:, None], fr.astype(int)[None, :]]
    if variant is Variant.LOCAL:
        offs = (np.arange(m)[None, :] - np.arange(n)[:, None]) % n
        prob = np.where(offs <= params.k - 1, prob, 0.0)
    adj = rng.random((n, m)) < prob
    rows, cols = np.nonzero(adj)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(adj.sum(axis=1), out=indptr[1:])
    return BipartiteGraph(n, m, fl, fr, indptr, cols.astype(np.int64))
