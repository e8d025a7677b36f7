"""k-means under DTW with DBA (DTW barycenter averaging) cluster centers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from .errors import ConfigError, DomainError
from .metric import _accumulate, _backtrack, _cost_only, cross_cost_matrix

SMALL_CLUSTER = 5


@dataclass
class RestartRecord:
    seed: int
    inertia: float
    n_iter: int
    converged: bool
    history: list[float]  # objective at the start of every iteration, then the final value


@dataclass
class ClusterModel:
    k: int
    seed: int
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int
    converged: bool
    restarts: list[RestartRecord] = field(default_factory=list)

    def to_dict(self, unit_ids: Sequence[str] | None = None) -> dict:
        ids = list(unit_ids) if unit_ids is not None else [str(i) for i in range(len(self.labels))]
        return {
            "k": self.k,
            "seed": self.seed,
            "labels": {u: int(l) for u, l in zip(ids, self.labels)},
            "centers": self.centers.tolist(),
            "inertia": self.inertia,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "restarts": [
                {"seed": r.seed, "inertia": r.inertia, "n_iter": r.n_iter, "converged": r.converged}
                for r in self.restarts
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, unit_ids: Sequence[str] | None = None) -> "ClusterModel":
        ids = list(unit_ids) if unit_ids is not None else list(d["labels"])
        labels = np.array([d["labels"][u] for u in ids], dtype=np.int64)
        return cls(
            k=int(d["k"]),
            seed=int(d["seed"]),
            labels=labels,
            centers=np.asarray(d["centers"], dtype=float),
            inertia=float(d["inertia"]),
            n_iter=int(d["n_iter"]),
            converged=bool(d["converged"]),
        )


def _as_matrix(curves) -> np.ndarray:
    if hasattr(curves, "curves"):
        curves = curves.curves
    X = np.vstack([np.asarray(getattr(c, "values", c), dtype=float) for c in curves])
    if not np.all(np.isfinite(X)):
        raise DomainError("curves contain non-finite values")
    return np.ascontiguousarray(X)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(stream)))


def init_centers(curves, k: int, seed: int, method: str = "kmeans++") -> np.ndarray:
    """Pick ``k`` distinct input curves as starting centers; returns their indices."""
    X = _as_matrix(curves)
    n = X.shape[0]
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of curves ({n})")
    rng = _rng(seed)
    if method == "random-pick":
        return np.sort(rng.choice(n, size=k, replace=False))
    if method != "kmeans++":
        raise ConfigError(f"unknown init method {method!r}")

    chosen = [int(rng.integers(n))]
    nearest = cross_cost_matrix(X, X[chosen])[:, 0]
    while len(chosen) < k:
        weights = nearest.copy()
        weights[chosen] = 0.0
        total = weights.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=weights / total))
        else:
            # only duplicates of chosen curves remain
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, cross_cost_matrix(X, X[[nxt]])[:, 0])
    return np.array(chosen, dtype=np.int64)


def assign(curves, centers) -> np.ndarray:
    """Label each curve with its DTW-nearest center; ties go to the lowest index."""
    centers = _as_matrix(centers)
    if centers.shape[0] == 0:
        raise DomainError("no centers")
    return np.argmin(cross_cost_matrix(_as_matrix(curves), centers), axis=1)


@nb.njit(cache=True)
def _dba_step(center, members):
    # one alignment + averaging pass; also returns each member's cost to the input center
    L = center.shape[0]
    sums = np.zeros(L)
    counts = np.zeros(L)
    costs = np.empty(members.shape[0])
    for r in range(members.shape[0]):
        acc = _accumulate(center, members[r], -1)
        costs[r] = acc[-1, -1]
        path = _backtrack(acc)
        for s in range(path.shape[0]):
            sums[path[s, 0]] += members[r, path[s, 1]]
            counts[path[s, 0]] += 1.0
    return sums / counts, costs


@nb.njit(cache=True)
def _member_costs(center, members):
    out = np.empty(members.shape[0])
    for r in range(members.shape[0]):
        out[r] = _cost_only(center, members[r])
    return out


def dba_barycenter(members, init, max_iter: int = 30, tol: float = 1e-6, return_history: bool = False):
    """DTW barycenter of ``members`` starting from ``init``.

    Each pass aligns every member to the current center and replaces each
    center sample by the mean of the member samples aligned to it. A pass is
    only accepted when it strictly lowers the sum of squared DTW distances, so
    the objective never increases; iteration stops once the decrease falls
    below ``tol`` or after ``max_iter`` passes.
    """
    M = _as_matrix(members) if len(members) else np.empty((0, 0))
    if M.shape[0] == 0:
        raise DomainError("barycenter of an empty member set")
    center = np.ascontiguousarray(init, dtype=float).copy()
    if center.shape != (M.shape[1],):
        raise DomainError("init length differs from member length")

    candidate, costs = _dba_step(center, M)
    objective = math.fsum(costs)
    history = [objective]
    for _ in range(max_iter):
        new_costs = _member_costs(candidate, M)
        new_obj = math.fsum(new_costs)
        if not new_obj < objective:
            break
        center = candidate
        decrease = objective - new_obj
        objective = new_obj
        history.append(objective)
        if decrease < tol:
            break
        candidate, _ = _dba_step(center, M)
    if return_history:
        return center, history
    return center


def _repair_empty(X, centers, labels, costs, k):
    for j in range(k):
        if np.any(labels == j):
            continue
        own = costs[np.arange(len(labels)), labels]
        sizes = np.bincount(labels, minlength=k)
        movable = sizes[labels] > 1
        own = np.where(movable, own, -np.inf)
        i = int(np.argmax(own))
        centers[j] = X[i]
        costs[:, j] = cross_cost_matrix(X, X[[i]])[:, 0]
        labels[i] = j


def _fit_once(X, k, seed, init, max_iter, tol, dba_iter):
    idx = init_centers(X, k, seed, init)
    centers = X[idx].copy()
    costs = cross_cost_matrix(X, centers)
    labels = np.argmin(costs, axis=1)
    _repair_empty(X, centers, labels, costs, k)
    rows = np.arange(X.shape[0])

    history = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        history.append(math.fsum(costs[rows, labels]))
        for j in range(k):
            centers[j] = dba_barycenter(X[labels == j], centers[j], max_iter=dba_iter, tol=tol)
        costs = cross_cost_matrix(X, centers)
        new_labels = np.argmin(costs, axis=1)
        _repair_empty(X, centers, new_labels, costs, k)
        if np.array_equal(new_labels, labels):
            labels = new_labels
            converged = True
            break
        labels = new_labels
    inertia = math.fsum(costs[rows, labels])
    history.append(inertia)
    return labels, centers, inertia, n_iter, converged, history


def fit(
    curves,
    k: int,
    seed: int,
    max_iter: int = 50,
    tol: float = 1e-6,
    n_restarts: int = 5,
    init: str = "kmeans++",
    dba_iter: int = 30,
) -> ClusterModel:
    """DTW k-means; the best of ``n_restarts`` seeded runs by inertia.

    Inertia is the sum over curves of the squared DTW distance to the
    assigned center. Restart r draws from SeedSequence(seed, spawn_key=(r,)).
    """
    X = _as_matrix(curves)
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    if k > X.shape[0]:
        raise ConfigError(f"k={k} exceeds the number of curves ({X.shape[0]})")
    if n_restarts < 1 or max_iter < 1:
        raise ConfigError("n_restarts and max_iter must be positive")

    best = None
    records = []
    for r in range(n_restarts):
        rseed = int(np.random.SeedSequence(int(seed), spawn_key=(r,)).generate_state(1, np.uint64)[0] >> 1)
        labels, centers, inertia, n_iter, converged, history = _fit_once(X, k, rseed, init, max_iter, tol, dba_iter)
        records.append(RestartRecord(rseed, inertia, n_iter, converged, history))
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, n_iter, converged)
    labels, centers, inertia, n_iter, converged = best
    return ClusterModel(k, int(seed), labels, centers, inertia, n_iter, converged, records)


def adjusted_rand_index(labels_true, labels_pred) -> float:
    """Chance-corrected Rand index from the contingency table."""
    a = np.asarray(labels_true)
    b = np.asarray(labels_pred)
    if a.shape != b.shape:
        raise DomainError("label vectors differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return (x * (x - 1) // 2).sum()

    index = comb2(table)
    rows = comb2(table.sum(axis=1))
    cols = comb2(table.sum(axis=0))
    total = comb2(np.array([a.size]))
    expected = rows * cols / total if total else 0.0
    max_index = (rows + cols) / 2
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


@dataclass
class ClusterInfo:
    cluster: int
    members: list[str]
    center: np.ndarray
    mean_curve: np.ndarray
    mean_distance: float

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def small(self) -> bool:
        return self.size < SMALL_CLUSTER

    def to_dict(self) -> dict:
        return {
            "cluster": self.cluster,
            "size": self.size,
            "small_cluster": self.small,
            "members": self.members,
            "center": self.center.tolist(),
            "pointwise_mean": self.mean_curve.tolist(),
            "mean_distance": self.mean_distance,
        }


def summarize(model: ClusterModel, curves, unit_ids: Sequence[str] | None = None) -> list[ClusterInfo]:
    """Per-cluster members, DBA center, pointwise mean curve and mean DTW distance to the center."""
    if hasattr(curves, "curves") and unit_ids is None:
        unit_ids = curves.unit_ids
    X = _as_matrix(curves)
    ids = list(unit_ids) if unit_ids is not None else [str(i) for i in range(X.shape[0])]
    out = []
    for j in range(model.k):
        mask = model.labels == j
        d = np.sqrt(cross_cost_matrix(X[mask], model.centers[[j]])[:, 0])
        out.append(ClusterInfo(
            cluster=j,
            members=[u for u, m in zip(ids, mask) if m],
            center=model.centers[j].copy(),
            mean_curve=X[mask].mean(axis=0),
            mean_distance=float(d.mean()),
        ))
    return out
