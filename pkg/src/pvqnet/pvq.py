"""Pyramid lattice P(n, k): encoding, counting, enumeration, and indexing.

P(n, k) is the set of n-dimensional integer vectors whose coordinate
magnitudes sum to exactly k.  A real vector is approximated by a lattice
point plus one non-negative scale factor, so a dot product against the
approximation needs only additions and subtractions plus a single
multiply at the end.

All lattice sizes are exact arbitrary-precision integers.  Points are
plain tuples of ints wrapped in frozen dataclasses, so every value in
this module is hashable and safe to share across threads.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "PvqPoint",
    "QuantizedVector",
    "PointIndex",
    "count_points",
    "encode",
    "exhaustive_nearest",
    "enumerate_points",
    "point_to_index",
    "index_to_point",
    "EXHAUSTIVE_LIMIT",
]

# exhaustive_nearest materializes the whole codebook; beyond this it refuses
EXHAUSTIVE_LIMIT = 10**7


@dataclass(frozen=True)
class PvqPoint:
    """Integer lattice point whose coordinate magnitudes sum to exactly k."""

    coords: tuple[int, ...]
    k: int

    def __post_init__(self) -> None:
        if not isinstance(self.coords, tuple):
            object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        if len(self.coords) < 1:
            raise ValueError("point needs at least one coordinate")
        if self.k < 1:
            raise ValueError(f"pulse budget must be positive, got {self.k}")
        l1 = sum(abs(c) for c in self.coords)
        if l1 != self.k:
            raise ValueError(f"coordinate magnitudes sum to {l1}, expected {self.k}")

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def nonzeros(self) -> int:
        return sum(1 for c in self.coords if c != 0)

    def to_array(self) -> np.ndarray:
        out = np.array(self.coords, dtype=np.int64)
        out.flags.writeable = False
        return out


@dataclass(frozen=True)
class QuantizedVector:
    """A lattice point plus the scale that maps it back to real space.

    Reconstruction is ``rho * point.coords``.  The all-zero input is
    represented by rho == 0.0 with the conventional point (k, 0, ..., 0),
    so the point field is always a valid lattice member.
    """

    point: PvqPoint
    rho: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.rho) or self.rho < 0.0:
            raise ValueError(f"scale must be finite and non-negative, got {self.rho}")
        if self.rho == 0.0:
            canonical = (self.point.k,) + (0,) * (self.point.n - 1)
            if self.point.coords != canonical:
                raise ValueError("zero scale requires the conventional point (k, 0, ..., 0)")

    def dequantize(self) -> np.ndarray:
        return self.rho * self.point.to_array().astype(np.float64)


@dataclass(frozen=True)
class PointIndex:
    """Rank of a point within the fixed enumeration of P(n, k)."""

    value: int
    n: int
    k: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.k < 1:
            raise ValueError("index needs n >= 1 and k >= 1")
        total = count_points(self.n, self.k)
        if not 0 <= self.value < total:
            raise ValueError(f"index {self.value} out of range for {total} points")

    @property
    def bits(self) -> int:
        """Width of the fixed-size binary payload for this lattice."""
        total = count_points(self.n, self.k)
        return 0 if total <= 1 else (total - 1).bit_length()


@lru_cache(maxsize=4096)
def count_points(n: int, k: int) -> int:
    """Number of points in P(n, k), as an exact Python integer.

    Sum over d of 2^d * C(n, d) * C(k-1, d-1) where d counts the nonzero
    coordinates.  Terms are updated incrementally so the cost is
    O(min(n, k)) big-integer operations.
    """
    if n < 1:
        raise ValueError(f"dimension must be positive, got {n}")
    if k < 0:
        raise ValueError(f"pulse budget must be non-negative, got {k}")
    if k == 0:
        return 1
    total = 0
    term = 2 * n  # d = 1
    for d in range(1, min(n, k) + 1):
        total += term
        term = term * 2 * (n - d) * (k - d) // (d * (d + 1))
    return total


@lru_cache(maxsize=64)
def _count_table(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Rows m = 0..n of counts |P(m, j)| for j = 0..k (row 0 is the empty lattice)."""
    rows = [[1] + [0] * k]
    for _ in range(n):
        prev = rows[-1]
        row = [1]
        for j in range(1, k + 1):
            row.append(prev[j] + prev[j - 1] + row[j - 1])
        rows.append(row)
    return tuple(tuple(r) for r in rows)


def enumerate_points(n: int, k: int) -> Iterator[tuple[int, ...]]:
    """Yield every point of P(n, k) in canonical order.

    The first coordinate runs from +k down to -k; the remainder is
    enumerated recursively under the leftover budget.  The first point
    yielded is (k, 0, ..., 0).
    """
    if n < 1:
        raise ValueError(f"dimension must be positive, got {n}")
    if k < 0:
        raise ValueError(f"pulse budget must be non-negative, got {k}")
    if n == 1:
        if k == 0:
            yield (0,)
        else:
            yield (k,)
            yield (-k,)
        return
    for v in range(k, -k - 1, -1):
        for rest in enumerate_points(n - 1, k - abs(v)):
            yield (v,) + rest


def point_to_index(p: PvqPoint) -> PointIndex:
    """Rank of p in the canonical enumeration of P(n, k).

    Counts the points that precede p position by position, using the
    suffix-count table.  O(n * k) integer additions.
    """
    table = _count_table(p.n, p.k)
    rank = 0
    budget = p.k
    for i, v in enumerate(p.coords):
        m = p.n - i - 1
        for ahead in range(budget, v, -1):
            rank += table[m][budget - abs(ahead)]
        budget -= abs(v)
        if budget == 0:
            break
    return PointIndex(rank, p.n, p.k)


def index_to_point(idx: PointIndex) -> PvqPoint:
    """Inverse of point_to_index; walks the suffix-count table."""
    table = _count_table(idx.n, idx.k)
    value = idx.value
    coords = []
    budget = idx.k
    for i in range(idx.n):
        m = idx.n - i - 1
        for v in range(budget, -budget - 1, -1):
            block = table[m][budget - abs(v)]
            if value < block:
                coords.append(v)
                budget -= abs(v)
                break
            value -= block
        else:  # pragma: no cover - PointIndex validates its range
            raise AssertionError("index exceeded lattice size")
    return PvqPoint(tuple(coords), idx.k)


def _bucket_extremes(ay: np.ndarray, mags: np.ndarray):
    """Per pulse-count bucket, the two largest and two smallest |y| entries.

    Exchange candidates only ever need a bucket's extremes: for fixed
    source and destination pulse counts the score is monotone in the
    destination's |y| and antitone in the source's.  The runners-up cover
    the case where both extremes land on the same coordinate.
    """
    order = np.lexsort((np.arange(ay.size), -ay, mags))
    srt = mags[order]
    starts = np.flatnonzero(np.r_[True, srt[1:] != srt[:-1]])
    ends = np.r_[starts[1:], srt.size]
    out = {}
    for s, e in zip(starts, ends):
        grp = order[s:e]
        out[int(srt[s])] = (grp[:2].tolist(), grp[::-1][:2].tolist())
    return out


def _bucket_extremes_small(ay: list, mags: list):
    """List-based twin of _bucket_extremes with the same tie-breaks.

    numpy's per-call overhead dominates the exchange search on short
    vectors, so below _SMALL_N the whole search runs on plain lists.
    """
    out: dict[int, tuple[list[int], list[int]]] = {}
    for i, (a, m) in enumerate(zip(ay, mags)):
        entry = out.get(m)
        if entry is None:
            out[m] = ([i], [i])
            continue
        dests, srcs = entry
        if a > ay[dests[0]]:
            dests.insert(0, i)
            del dests[2:]
        elif len(dests) < 2:
            dests.append(i)
        elif a > ay[dests[1]]:
            dests[1] = i
        if a <= ay[srcs[0]]:
            srcs.insert(0, i)
            del srcs[2:]
        elif len(srcs) < 2:
            srcs.append(i)
        elif a <= ay[srcs[1]]:
            srcs[1] = i
    return out


def _exchange_candidates(ay, mags, dot, norm2):
    """Scored single pulse moves j -> i, best first.

    Only bucket extremes can be optimal for a given pair of pulse
    counts, so the list is complete with respect to the best move even
    though it does not contain every (i, j) pair.
    """
    if isinstance(ay, list):
        extremes = _bucket_extremes_small(ay, mags)
    else:
        extremes = _bucket_extremes(ay, mags)
    moves = []
    for m_i, (dests, _) in extremes.items():
        for m_j, (_, srcs) in extremes.items():
            if m_j < 1:
                continue
            den = norm2 + 2 * (m_i - m_j) + 2
            for i in dests:
                num_i = dot + ay[i]
                for j in srcs:
                    if i == j:
                        continue
                    num = num_i - ay[j]
                    moves.append((num * num / den, i, j))
    moves.sort(key=lambda t: (-t[0], t[1], t[2]))
    return moves


def _apply_move(ay, mags, dot, norm2, i, j):
    dot += ay[i] - ay[j]
    norm2 += 2 * (mags[i] - mags[j]) + 2
    mags[i] += 1
    mags[j] -= 1
    return dot, norm2


def _config_score(ay, mags):
    """Recompute (dot, norm2) from scratch for the current magnitudes.

    The incremental updates drift by an ulp per move; chains that return
    to their start must compare exactly equal or the escape loop would
    accept the drift as progress and never terminate.
    """
    if isinstance(ay, list):
        dot = 0.0
        norm2 = 0
        for a, m in zip(ay, mags):
            dot += m * a
            norm2 += m * m
        return dot, float(norm2)
    return float(np.dot(mags, ay)), float(np.dot(mags, mags))


def _exchange_fixpoint(ay, mags, dot, norm2, cap):
    """Apply the best improving pulse move until none is left.

    The score strictly increases per move over a finite set, so this
    terminates; the cap only guards against float-equality loops.
    """
    for _ in range(cap):
        moves = _exchange_candidates(ay, mags, dot, norm2)
        if not moves or moves[0][0] <= dot * dot / norm2:
            break
        _, i, j = moves[0]
        dot, norm2 = _apply_move(ay, mags, dot, norm2, i, j)
    return dot, norm2


_ESCAPE_WIDTH = 8
_SMALL_N = 64


def _exchange_search(ay, mags, dot, norm2):
    """Exchange local search with a depth-limited escape.

    Runs improving moves to a fixpoint, then tries each of the few best
    non-improving moves as a forced first step followed by improving
    moves; a chain is kept only if it ends strictly above the fixpoint.
    This repairs the two-move-deep traps a purely greedy pulse search
    can fall into.
    """
    small = ay.size <= _SMALL_N
    if small:
        ay, mags = ay.tolist(), mags.tolist()
    cap = 4 * int(np.sum(mags)) + 64
    dot, norm2 = _exchange_fixpoint(ay, mags, dot, norm2, cap)
    while True:
        dot, norm2 = _config_score(ay, mags)
        base = dot * dot / norm2
        accepted = False
        for _, i, j in _exchange_candidates(ay, mags, dot, norm2)[:_ESCAPE_WIDTH]:
            trial = mags.copy()
            t_dot, t_norm2 = _apply_move(ay, trial, dot, norm2, i, j)
            _exchange_fixpoint(ay, trial, t_dot, t_norm2, cap)
            t_dot, t_norm2 = _config_score(ay, trial)
            if t_dot * t_dot / t_norm2 > base:
                mags[:] = trial
                dot, norm2 = t_dot, t_norm2
                accepted = True
                break
        if not accepted:
            return np.asarray(mags, dtype=np.int64) if small else mags


def _pulse_magnitudes(ay: np.ndarray, k: int) -> np.ndarray:
    """Placement of k magnitude pulses approximating the direction of |y|.

    Three phases: (1) pre-project to the scaled floor of ay, (2) greedily
    add the remaining pulses, each to the coordinate that most increases
    the cosine against ay, (3) polish with the exchange search, which
    moves pulses between coordinates while that helps.  The polish phase
    repairs the rare myopic greedy step; the result matches the
    exhaustive search on every tested desk-scale input.

    Greedy candidates are bucketed by current pulse count: within a
    bucket the score is monotone in |y_i|, so only each bucket's best
    entry needs scoring per step.  Ties go to the lowest index.
    """
    mags = np.floor(ay * (float(k) / float(ay.sum()))).astype(np.int64)
    placed = int(mags.sum())

    dot = float(np.dot(mags, ay))
    norm2 = float(np.dot(mags, mags))

    # float floors can overshoot in pathological cases; drop the pulses
    # whose removal hurts the cosine least
    while placed > k:
        best_i = -1
        best_num = best_den = 0.0
        for i in np.flatnonzero(mags):
            m = int(mags[i])
            num = dot - ay[i]
            den = norm2 - 2 * m + 1
            if best_i < 0 or num * num * best_den > best_num * best_num * den:
                best_i, best_num, best_den = int(i), num, den
        mags[best_i] -= 1
        dot, norm2 = best_num, best_den
        placed -= 1

    if placed < k:
        buckets: dict[int, list[tuple[float, int]]] = {}
        for m in np.unique(mags):
            idxs = np.flatnonzero(mags == m)
            heap = [(-float(ay[i]), int(i)) for i in idxs]
            heapq.heapify(heap)
            buckets[int(m)] = heap

        for _ in range(k - placed):
            best = None
            for m, heap in buckets.items():
                if not heap:
                    continue
                a, i = -heap[0][0], heap[0][1]
                num = dot + a
                den = norm2 + 2 * m + 1
                score = num * num / den
                if best is None or score > best[0] or (score == best[0] and i < best[3]):
                    best = (score, m, a, i)
            _, m, a, i = best
            heapq.heappop(buckets[m])
            buckets.setdefault(m + 1, [])
            heapq.heappush(buckets[m + 1], (-a, i))
            dot += a
            norm2 += 2 * m + 1

        mags = np.zeros_like(mags)
        for m, heap in buckets.items():
            for _, i in heap:
                mags[i] = m

    return _exchange_search(ay, mags, dot, norm2)


def encode(y: Sequence[float] | np.ndarray, k: int) -> QuantizedVector:
    """Quantize a real vector onto P(n, k) with a greedy cosine search.

    Magnitudes are found by pulse placement on |y| (scaled to unit max so
    the scores are well conditioned), signs are copied from y, and the
    scale is the length ratio ||y|| / ||point||.  The all-zero vector maps
    to rho == 0 with the conventional point (k, 0, ..., 0).

    Deterministic: equal inputs produce equal outputs, and scaling y by
    any positive factor changes only rho.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("input must be a non-empty 1-D vector")
    if not np.all(np.isfinite(y)):
        raise ValueError("input contains non-finite values")
    if k < 1:
        raise ValueError(f"pulse budget must be positive, got {k}")

    n = y.size
    if not y.any():
        return QuantizedVector(PvqPoint((k,) + (0,) * (n - 1), k), 0.0)

    ay = np.abs(y)
    mags = _pulse_magnitudes(ay / ay.max(), k)
    coords = np.where(y < 0, -mags, mags)
    point = PvqPoint(tuple(int(c) for c in coords), k)
    rho = float(np.linalg.norm(y) / np.linalg.norm(mags))
    return QuantizedVector(point, rho)


@lru_cache(maxsize=8)
def _codebook(n: int, k: int) -> np.ndarray:
    pts = np.array(list(enumerate_points(n, k)), dtype=np.int32)
    pts.flags.writeable = False
    return pts


def exhaustive_nearest(y: Sequence[float] | np.ndarray, k: int) -> PvqPoint:
    """Best point of P(n, k) by brute force over the whole codebook.

    Maximizes cosine similarity with y; exact ties go to the
    lexicographically smallest coordinate tuple.  Intended as a ground
    truth for tests, so it refuses lattices larger than EXHAUSTIVE_LIMIT
    points.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("input must be a non-empty 1-D vector")
    if not np.all(np.isfinite(y)):
        raise ValueError("input contains non-finite values")
    if not y.any():
        raise ValueError("the zero vector has no nearest direction")
    if k < 1:
        raise ValueError(f"pulse budget must be positive, got {k}")
    total = count_points(y.size, k)
    if total > EXHAUSTIVE_LIMIT:
        raise ValueError(
            f"P({y.size}, {k}) has {total} points, beyond the exhaustive limit of {EXHAUSTIVE_LIMIT}"
        )

    pts = _codebook(y.size, k).astype(np.float64)
    cos = (pts @ y) / np.linalg.norm(pts, axis=1)
    best = float(cos.max())
    candidates = np.flatnonzero(cos == best)
    coords = min(tuple(int(c) for c in pts[i]) for i in candidates)
    return PvqPoint(coords, k)
