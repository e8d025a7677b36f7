"""Dynamic time warping over resilience curves.

The local cost is the squared difference (p_i - q_j)**2, accumulated along
the cheapest warping path; the distance is the square root of that sum.
Steps allowed: (i-1, j), (i, j-1), (i-1, j-1), all with unit weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba as nb
import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class DtwResult:
    distance: float
    cost: float  # accumulated squared cost, distance = sqrt(cost)
    path: list[tuple[int, int]] | None = None


@nb.njit(cache=True)
def _accumulate(p, q, band):
    m, n = p.shape[0], q.shape[0]
    acc = np.full((m + 1, n + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, m + 1):
        lo, hi = 1, n
        if band >= 0:
            # band is measured around the slanted diagonal so unequal lengths stay feasible
            # each row is widened just enough to touch the next row's first cell
            scale = (n - 1) / max(m - 1, 1)
            centre = (i - 1) * scale
            lo = max(1, int(math.floor(centre - band)) + 1)
            hi = int(math.floor(centre + band)) + 1
            if i < m:
                hi = max(hi, int(math.floor(i * scale - band)))
            else:
                hi = n  # only matters when m == 1
            hi = min(n, hi)
        for j in range(lo, hi + 1):
            d = p[i - 1] - q[j - 1]
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = d * d + best
    return acc


@nb.njit(cache=True)
def _cost_only(p, q):
    # two-row version of _accumulate for the unbanded, no-path case
    m, n = p.shape[0], q.shape[0]
    prev = np.full(n + 1, np.inf)
    cur = np.full(n + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, m + 1):
        cur[0] = np.inf
        for j in range(1, n + 1):
            d = p[i - 1] - q[j - 1]
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = d * d + best
        prev, cur = cur, prev
    return prev[n]


@nb.njit(cache=True)
def _backtrack(acc):
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    out = np.empty((i + j, 2), dtype=np.int64)
    k = 0
    while True:
        out[k, 0] = i - 1
        out[k, 1] = j - 1
        k += 1
        if i == 1 and j == 1:
            break
        diag = acc[i - 1, j - 1]
        up = acc[i - 1, j]
        left = acc[i, j - 1]
        # ties: diagonal, then vertical, then horizontal
        if diag <= up and diag <= left:
            i -= 1
            j -= 1
        elif up <= left:
            i -= 1
        else:
            j -= 1
    return out[:k][::-1]


def _as_series(x, name):
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional")
    if a.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite values")
    return a


def dtw_cost(p, q, band: int | None = None) -> float:
    """Accumulated squared cost of the optimal warping path (the squared DTW distance)."""
    p = _as_series(p, "p")
    q = _as_series(q, "q")
    if band is None:
        return float(_cost_only(p, q))
    if band < 0:
        raise DomainError("band must be non-negative")
    cost = float(_accumulate(p, q, band)[-1, -1])
    if not math.isfinite(cost):
        raise DomainError(f"band {band} admits no warping path for lengths {len(p)}, {len(q)}")
    return cost


def dtw(p, q, return_path: bool = False, band: int | None = None) -> DtwResult:
    """DTW distance between two sequences, optionally with the realized warping path.

    ``band`` keeps |j - i*(n-1)/(m-1)| <= band, with rows widened just enough to
    stay connected. None (default) means unconstrained.
    """
    p = _as_series(p, "p")
    q = _as_series(q, "q")
    if not return_path:
        cost = dtw_cost(p, q, band)
        return DtwResult(math.sqrt(cost), cost)
    if band is not None and band < 0:
        raise DomainError("band must be non-negative")
    acc = _accumulate(p, q, -1 if band is None else band)
    cost = float(acc[-1, -1])
    if not math.isfinite(cost):
        raise DomainError(f"band {band} admits no warping path for lengths {len(p)}, {len(q)}")
    path = [(int(a), int(b)) for a, b in _backtrack(acc)]
    return DtwResult(math.sqrt(cost), cost, path)


def path_cost(p, q, path: Sequence[tuple[int, int]]) -> float:
    """Sum of squared differences along an explicit warping path."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return math.fsum((p[i] - q[j]) ** 2 for i, j in path)


def is_warping_path(path: Sequence[tuple[int, int]], m: int, n: int) -> bool:
    """Check boundary, continuity and monotonicity of ``path`` for lengths m, n."""
    if not path or tuple(path[0]) != (0, 0) or tuple(path[-1]) != (m - 1, n - 1):
        return False
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        di, dj = i1 - i0, j1 - j0
        if di not in (0, 1) or dj not in (0, 1) or di + dj == 0:
            return False
    return max(m, n) <= len(path) <= m + n - 1


@nb.njit(cache=True)
def _pairwise(X, lengths):
    n = X.shape[0]
    out = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            c = _cost_only(X[a, : lengths[a]], X[b, : lengths[b]])
            out[a, b] = c
            out[b, a] = c
    return out


def _stack(curves) -> tuple[np.ndarray, np.ndarray]:
    seqs = [_as_series(getattr(c, "values", c), f"curve {i}") for i, c in enumerate(curves)]
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    X = np.zeros((len(seqs), int(lengths.max())))
    for i, s in enumerate(seqs):
        X[i, : len(s)] = s
    return X, lengths


def pairwise_cost_matrix(curves) -> np.ndarray:
    """Symmetric matrix of accumulated squared DTW costs."""
    if len(curves) < 2:
        raise DomainError("pairwise_matrix needs at least two curves")
    X, lengths = _stack(curves)
    return _pairwise(X, lengths)


def pairwise_matrix(curves) -> np.ndarray:
    """Symmetric n x n matrix of DTW distances; accepts a CurveSet or a list of sequences."""
    if hasattr(curves, "curves"):
        curves = curves.curves
    return np.sqrt(pairwise_cost_matrix(curves))


def cross_cost_matrix(curves, centers) -> np.ndarray:
    """Squared DTW costs between every curve (rows) and every center (columns)."""
    X, lx = _stack(curves)
    C, lc = _stack(centers)
    return _cross(X, lx, C, lc)


@nb.njit(cache=True)
def _cross(X, lx, C, lc):
    out = np.empty((X.shape[0], C.shape[0]))
    for a in range(X.shape[0]):
        for b in range(C.shape[0]):
            out[a, b] = _cost_only(X[a, : lx[a]], C[b, : lc[b]])
    return out

