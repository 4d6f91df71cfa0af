"""Matching engines on :class:`~flexmatch.graphs.BipartiteGraph`.

``max_matching``         Hopcroft-Karp; deterministic given adjacency order.
``max_weight_matching``  successive shortest augmenting paths with node
                         potentials, restricted to positive-weight edges.
``karp_sipser``          degree-one rule first, otherwise a uniform edge.
``greedy_naive``         left nodes in index order take a uniform free
                         neighbour.
``greedy_prioritizing``  as above but regular neighbours are tried first.

All randomized engines draw only from the stream handed to them.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .errors import MissingWeightsError
from .graphs import BipartiteGraph
from .rng import RngSeed, as_seed, make_generator


@dataclass(frozen=True, eq=False)
class Matching:
    """Matched pairs as an ``(size, 2)`` array sorted by left index."""

    pairs: np.ndarray
    weight_total: Optional[float] = None

    @property
    def size(self) -> int:
        return int(self.pairs.shape[0])

    @classmethod
    def from_left_mates(cls, mate: np.ndarray, weight_total: Optional[float] = None) -> "Matching":
        left = np.nonzero(mate >= 0)[0]
        pairs = np.column_stack((left, mate[left])).astype(np.int64)
        return cls(pairs, weight_total)

    def as_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.pairs}

    def is_valid_for(self, g: BipartiteGraph) -> bool:
        if self.size == 0:
            return True
        left, right = self.pairs[:, 0], self.pairs[:, 1]
        if len(np.unique(left)) != self.size or len(np.unique(right)) != self.size:
            return False
        return all(g.has_edge(int(i), int(j)) for i, j in self.pairs)


@dataclass(frozen=True)
class MatchStats:
    max_match_size: int
    non_isolated_left: int
    non_isolated_right: int
    greedy_naive_size: Optional[int] = None
    greedy_prior_size: Optional[int] = None
    ks_size: Optional[int] = None
    weight_total: Optional[float] = None

    @property
    def phi_count(self) -> int:
        return min(self.non_isolated_left, self.non_isolated_right)


# ---------------------------------------------------------------------------
# Hopcroft-Karp
# ---------------------------------------------------------------------------

_INF = np.iinfo(np.int64).max


@numba.njit(cache=True, nogil=True)
def _hopcroft_karp(indptr, indices, n_right):
    n_left = indptr.shape[0] - 1
    mate_l = np.full(n_left, -1, dtype=np.int64)
    mate_r = np.full(n_right, -1, dtype=np.int64)
    dist = np.empty(n_left, dtype=np.int64)
    queue = np.empty(n_left, dtype=np.int64)
    it = np.empty(n_left, dtype=np.int64)
    stack = np.empty(n_left + 1, dtype=np.int64)
    inf = np.iinfo(np.int64).max
    # cheap greedy warm start; any matching is a valid starting point
    for u in range(n_left):
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if mate_r[v] == -1:
                mate_r[v] = u
                mate_l[u] = v
                break
    while True:
        head = 0
        tail = 0
        for u in range(n_left):
            if mate_l[u] == -1:
                dist[u] = 0
                queue[tail] = u
                tail += 1
            else:
                dist[u] = inf
        found = False
        while head < tail:
            u = queue[head]
            head += 1
            for e in range(indptr[u], indptr[u + 1]):
                w = mate_r[indices[e]]
                if w == -1:
                    found = True
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    queue[tail] = w
                    tail += 1
        if not found:
            break
        for u in range(n_left):
            it[u] = indptr[u]
        for root in range(n_left):
            if mate_l[root] != -1:
                continue
            top = 0
            stack[0] = root
            while top >= 0:
                x = stack[top]
                if it[x] == indptr[x + 1]:
                    dist[x] = inf
                    top -= 1
                    if top >= 0:
                        it[stack[top]] += 1
                    continue
                v = indices[it[x]]
                w = mate_r[v]
                if w == -1:
                    for s in range(top, -1, -1):
                        y = stack[s]
                        vy = indices[it[y]]
                        mate_r[vy] = y
                        mate_l[y] = vy
                    break
                if dist[w] != inf and dist[w] == dist[x] + 1:
                    top += 1
                    stack[top] = w
                else:
                    it[x] += 1
    return mate_l


def max_matching(g: BipartiteGraph) -> Matching:
    return Matching.from_left_mates(_hopcroft_karp(g.indptr, g.indices, g.n_right))


def max_matching_size(g: BipartiteGraph) -> int:
    return int(np.count_nonzero(_hopcroft_karp(g.indptr, g.indices, g.n_right) >= 0))


# ---------------------------------------------------------------------------
# maximum weight
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _max_weight(indptr, indices, weights, n_right):
    n_left = indptr.shape[0] - 1
    nv = n_left + n_right
    mate_l = np.full(n_left, -1, dtype=np.int64)
    mate_r = np.full(n_right, -1, dtype=np.int64)
    mate_w = np.zeros(n_right, dtype=np.float64)
    pot = np.zeros(nv, dtype=np.float64)
    for u in range(n_left):
        for e in range(indptr[u], indptr[u + 1]):
            w = weights[e]
            if w > 0.0 and -w < pot[n_left + indices[e]]:
                pot[n_left + indices[e]] = -w
    dist = np.empty(nv, dtype=np.float64)
    parent = np.empty(nv, dtype=np.int64)
    done = np.zeros(nv, dtype=np.bool_)
    while True:
        for v in range(nv):
            dist[v] = np.inf
            parent[v] = -1
            done[v] = False
        heap = [(0.0, np.int64(0))]
        heap.pop()
        for u in range(n_left):
            if mate_l[u] == -1:
                dist[u] = 0.0
                heapq.heappush(heap, (0.0, np.int64(u)))
        while len(heap) > 0:
            d, x = heapq.heappop(heap)
            if done[x] or d > dist[x]:
                continue
            done[x] = True
            if x < n_left:
                for e in range(indptr[x], indptr[x + 1]):
                    w = weights[e]
                    r = indices[e]
                    if w <= 0.0 or mate_l[x] == r:
                        continue
                    y = n_left + r
                    nd = d + (-w + pot[x] - pot[y])
                    if nd < 0.0:
                        nd = 0.0
                    if nd < dist[y]:
                        dist[y] = nd
                        parent[y] = x
                        heapq.heappush(heap, (nd, y))
            else:
                r = x - n_left
                u = mate_r[r]
                if u >= 0:
                    nd = d + (mate_w[r] + pot[x] - pot[u])
                    if nd < 0.0:
                        nd = 0.0
                    if nd < dist[u]:
                        dist[u] = nd
                        parent[u] = x
                        heapq.heappush(heap, (nd, np.int64(u)))
        best = -1
        best_cost = 0.0
        dmax = 0.0
        for v in range(nv):
            if done[v]:
                if dist[v] > dmax:
                    dmax = dist[v]
                if v >= n_left and mate_r[v - n_left] == -1:
                    real = dist[v] + pot[v]
                    if real < best_cost:
                        best_cost = real
                        best = v
        if best < 0:
            break
        for v in range(nv):
            pot[v] += dist[v] if done[v] else dmax
        y = best
        while y >= 0:
            x = parent[y]
            r = y - n_left
            prev = parent[x]
            for e in range(indptr[x], indptr[x + 1]):
                if indices[e] == r:
                    mate_w[r] = weights[e]
                    break
            mate_r[r] = x
            mate_l[x] = r
            y = prev
    total = 0.0
    for r in range(n_right):
        if mate_r[r] >= 0:
            total += mate_w[r]
    return mate_l, total


def max_weight_matching(g: BipartiteGraph) -> Matching:
    if g.weights is None:
        raise MissingWeightsError("max_weight_matching needs a weighted graph")
    mate, _ = _max_weight(g.indptr, g.indices, g.weights, g.n_right)
    m = Matching.from_left_mates(mate)
    total = 0.0
    for i, j in m.pairs:
        total += g.edge_weight(int(i), int(j))
    return Matching(m.pairs, float(total))


# ---------------------------------------------------------------------------
# Karp-Sipser
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _ks_drop(e, alive, elist, epos, ecount, ends, deg, d1, d1pos, d1count):
    alive[e] = False
    last = elist[ecount - 1]
    p = epos[e]
    elist[p] = last
    epos[last] = p
    ecount -= 1
    for side in range(2):
        v = ends[e, side]
        deg[v] -= 1
        if deg[v] == 1:
            d1pos[v] = d1count
            d1[d1count] = v
            d1count += 1
        elif deg[v] == 0:
            q = d1pos[v]
            tail = d1[d1count - 1]
            d1[q] = tail
            d1pos[tail] = q
            d1pos[v] = -1
            d1count -= 1
    return ecount, d1count


@numba.njit(cache=True, nogil=True)
def _karp_sipser(rng, indptr, indices, rptr, rleft, reid, n_right):
    n_left = indptr.shape[0] - 1
    m = indices.shape[0]
    nv = n_left + n_right
    ends = np.empty((m, 2), dtype=np.int64)
    for u in range(n_left):
        for e in range(indptr[u], indptr[u + 1]):
            ends[e, 0] = u
            ends[e, 1] = n_left + indices[e]
    alive = np.ones(m, dtype=np.bool_)
    elist = np.arange(m)
    epos = np.arange(m)
    ecount = m
    deg = np.zeros(nv, dtype=np.int64)
    for u in range(n_left):
        deg[u] = indptr[u + 1] - indptr[u]
    for r in range(n_right):
        deg[n_left + r] = rptr[r + 1] - rptr[r]
    d1 = np.empty(nv, dtype=np.int64)
    d1pos = np.full(nv, -1, dtype=np.int64)
    d1count = 0
    for v in range(nv):
        if deg[v] == 1:
            d1pos[v] = d1count
            d1[d1count] = v
            d1count += 1
    mate_l = np.full(n_left, -1, dtype=np.int64)
    while ecount > 0:
        if d1count > 0:
            # uniform over edges touching a degree-one node: draw a degree-one
            # node, take its edge, and accept with probability 1/2 when both
            # endpoints have degree one (such an edge is hit twice as often)
            while True:
                v = d1[rng.integers(0, d1count)]
                e = -1
                if v < n_left:
                    for k in range(indptr[v], indptr[v + 1]):
                        if alive[k]:
                            e = k
                            break
                else:
                    r = v - n_left
                    for k in range(rptr[r], rptr[r + 1]):
                        if alive[reid[k]]:
                            e = reid[k]
                            break
                other = ends[e, 1] if v < n_left else ends[e, 0]
                if deg[other] != 1 or rng.random() < 0.5:
                    break
        else:
            e = elist[rng.integers(0, ecount)]
        u = ends[e, 0]
        r = ends[e, 1] - n_left
        mate_l[u] = r
        for k in range(indptr[u], indptr[u + 1]):
            if alive[k]:
                ecount, d1count = _ks_drop(k, alive, elist, epos, ecount, ends, deg, d1, d1pos, d1count)
        for k in range(rptr[r], rptr[r + 1]):
            f = reid[k]
            if alive[f]:
                ecount, d1count = _ks_drop(f, alive, elist, epos, ecount, ends, deg, d1, d1pos, d1count)
    return mate_l


def karp_sipser(g: BipartiteGraph, seed: "RngSeed | int") -> Matching:
    rng = make_generator(as_seed(seed))
    rptr, rleft, reid = g.right_csr()
    return Matching.from_left_mates(_karp_sipser(rng, g.indptr, g.indices, rptr, rleft, reid, g.n_right))


# ---------------------------------------------------------------------------
# greedy heuristics
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _greedy(rng, indptr, indices, flex_right, prioritize):
    n_left = indptr.shape[0] - 1
    n_right = flex_right.shape[0]
    taken = np.zeros(n_right, dtype=np.bool_)
    mate_l = np.full(n_left, -1, dtype=np.int64)
    buf = np.empty(n_right, dtype=np.int64)
    for u in range(n_left):
        cnt = 0
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if not taken[v] and not (prioritize and flex_right[v]):
                buf[cnt] = v
                cnt += 1
        if cnt == 0 and prioritize:
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if not taken[v]:
                    buf[cnt] = v
                    cnt += 1
        if cnt > 0:
            v = buf[rng.integers(0, cnt)]
            taken[v] = True
            mate_l[u] = v
    return mate_l


def greedy_naive(g: BipartiteGraph, seed: "RngSeed | int") -> Matching:
    rng = make_generator(as_seed(seed))
    return Matching.from_left_mates(_greedy(rng, g.indptr, g.indices, g.flex_right, False))


def greedy_prioritizing(g: BipartiteGraph, seed: "RngSeed | int") -> Matching:
    rng = make_generator(as_seed(seed))
    return Matching.from_left_mates(_greedy(rng, g.indptr, g.indices, g.flex_right, True))


# ---------------------------------------------------------------------------
# isolated nodes
# ---------------------------------------------------------------------------


def non_isolated_counts(g: BipartiteGraph) -> tuple[int, int]:
    left = int(np.count_nonzero(np.diff(g.indptr)))
    right = int(np.count_nonzero(np.bincount(g.indices, minlength=g.n_right)))
    return left, right


def non_isolated_min(g: BipartiteGraph) -> int:
    return min(non_isolated_counts(g))
