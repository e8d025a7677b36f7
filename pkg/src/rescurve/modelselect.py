"""Choosing the number of clusters from DTW silhouette and distortion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterModel, _as_matrix, fit
from .errors import ConfigError, DomainError
from .metric import cross_cost_matrix, pairwise_cost_matrix


@dataclass
class SilhouetteBreakdown:
    a: np.ndarray
    b: np.ndarray
    s: np.ndarray

    @property
    def score(self) -> float:
        return float(np.mean(self.s))


def silhouette(distance_matrix, labels, denominator: str = "max") -> SilhouetteBreakdown:
    """Per-curve silhouette values from a precomputed distance matrix.

    s_i = (b_i - a_i) / max(a_i, b_i). Members of singleton clusters and
    curves with a_i = b_i = 0 get s_i = 0. ``denominator="min"`` swaps in
    min(a_i, b_i), which is unbounded and only kept for comparison.
    """
    D = np.asarray(distance_matrix, dtype=float)
    labels = np.asarray(labels)
    n = len(labels)
    if D.shape != (n, n):
        raise DomainError(f"distance matrix shape {D.shape} does not match {n} labels")
    if denominator not in ("max", "min"):
        raise ConfigError(f"denominator must be 'max' or 'min', got {denominator!r}")
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise DomainError("silhouette is undefined for a single cluster")

    masks = {c: labels == c for c in clusters}
    sizes = {c: int(m.sum()) for c, m in masks.items()}
    a = np.zeros(n)
    b = np.full(n, np.inf)
    s = np.zeros(n)
    for i in range(n):
        own = labels[i]
        for c in clusters:
            if c == own:
                if sizes[c] > 1:
                    a[i] = D[i, masks[c]].sum() / (sizes[c] - 1)
            else:
                b[i] = min(b[i], D[i, masks[c]].mean())
        if sizes[own] == 1:
            continue
        scale = max(a[i], b[i]) if denominator == "max" else min(a[i], b[i])
        if scale > 0:
            s[i] = (b[i] - a[i]) / scale
        elif b[i] > a[i]:
            s[i] = math.inf
    return SilhouetteBreakdown(a, b, s)


def distortion(model: ClusterModel, curves) -> float:
    """Sum of squared DTW distances from each curve to its assigned center."""
    X = _as_matrix(curves)
    if len(model.labels) != X.shape[0]:
        raise DomainError("model labels do not match the curve count")
    costs = cross_cost_matrix(X, model.centers)
    return math.fsum(costs[np.arange(X.shape[0]), model.labels])


@dataclass
class ElbowResult:
    k: int
    weak: bool
    second_differences: dict[int, float]


def elbow(distortions: dict[int, float]) -> ElbowResult:
    """Interior k with the largest drop-off in distortion decrease.

    Score at k is (d[k-1] - d[k]) - (d[k] - d[k+1]); ties go to the smaller
    k. The elbow is flagged weak when no score is positive.
    """
    ks = sorted(distortions)
    if len(ks) < 3:
        raise DomainError("elbow needs at least three k values")
    if any(b - a != 1 for a, b in zip(ks, ks[1:])):
        raise DomainError(f"k values must be consecutive, got {ks}")
    d = [float(distortions[k]) for k in ks]
    second = {ks[i]: (d[i - 1] - d[i]) - (d[i] - d[i + 1]) for i in range(1, len(ks) - 1)}
    best = max(second.values())
    k_elbow = min(k for k, v in second.items() if v == best)
    span = abs(d[0] - d[-1])
    weak = not best > 1e-12 * span
    return ElbowResult(k_elbow, weak, second)


@dataclass
class KSweepRow:
    k: int
    silhouette: float
    distortion: float
    inertia: float
    seed: int

    def to_dict(self) -> dict:
        return {"k": self.k, "silhouette": self.silhouette, "distortion": self.distortion,
                "inertia": self.inertia, "seed": self.seed}


@dataclass
class KSweepReport:
    rows: list[KSweepRow]
    elbow_k: int
    weak_elbow: bool
    recommended_k: int = 0
    rationale: str = ""
    anchor_distortion: dict[int, float] = field(default_factory=dict)
    seed: int = 0

    def silhouettes(self) -> dict[int, float]:
        return {r.k: r.silhouette for r in self.rows}

    def distortions(self) -> dict[int, float]:
        return {r.k: r.distortion for r in self.rows}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rows": [r.to_dict() for r in self.rows],
            "anchor_distortion": {str(k): v for k, v in self.anchor_distortion.items()},
            "elbow_k": self.elbow_k,
            "weak_elbow": self.weak_elbow,
            "recommended_k": self.recommended_k,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KSweepReport":
        rows = [KSweepRow(int(r["k"]), float(r["silhouette"]), float(r["distortion"]),
                          float(r["inertia"]), int(r["seed"])) for r in d["rows"]]
        if not rows:
            raise DomainError("k-sweep report has no rows")
        return cls(rows, int(d["elbow_k"]), bool(d["weak_elbow"]), int(d["recommended_k"]), d.get("rationale", ""),
                   {int(k): float(v) for k, v in d.get("anchor_distortion", {}).items()}, int(d.get("seed", 0)))


def recommend(report: KSweepReport) -> tuple[int, str]:
    """Best-silhouette k among the elbow and its two neighbours.

    With a weak elbow the global silhouette maximum is used instead.
    """
    sil = report.silhouettes()
    dist = report.distortions()
    k_sil = min(sil, key=lambda k: (-sil[k], k))
    e = report.elbow_k

    def describe(k):
        return f"k={k} (silhouette {sil[k]:.3f}, distortion {dist[k]:.4g})"

    if report.weak_elbow:
        return k_sil, f"weak elbow; global silhouette maximum at {describe(k_sil)}"
    candidates = [k for k in (e - 1, e, e + 1) if k in sil]
    if not candidates:
        return k_sil, f"elbow k={e} outside the swept range; global silhouette maximum at {describe(k_sil)}"
    k_best = min(candidates, key=lambda k: (-sil[k], k))
    if k_best == e == k_sil:
        return k_best, f"metrics agree: elbow and silhouette maximum at {describe(k_best)}"
    return k_best, (
        f"elbow at k={e}; best silhouette among k={candidates} is {describe(k_best)}; "
        f"global silhouette maximum at {describe(k_sil)}"
    )


def sweep_k(curves, k_min: int = 2, k_max: int = 10, seed: int = 0, n_restarts: int = 5,
            max_iter: int = 50, tol: float = 1e-6, distances=None) -> KSweepReport:
    """Fit one model per k and score each by silhouette and distortion.

    The fit for k uses seed SeedSequence(seed, spawn_key=(k,)). When
    k_min > 1 the distortion at k_min - 1 is also computed so that k_min
    can be an elbow candidate.
    """
    X = _as_matrix(curves)
    n = X.shape[0]
    if k_min < 2:
        raise ConfigError(f"k_min must be at least 2 (silhouette needs two clusters), got {k_min}")
    if k_max < k_min:
        raise ConfigError(f"k_max ({k_max}) is below k_min ({k_min})")
    if k_max > n:
        raise ConfigError(f"k_max={k_max} exceeds the number of curves ({n})")
    D = np.sqrt(pairwise_cost_matrix(X)) if distances is None else np.asarray(distances)

    def kseed(k):
        return int(np.random.SeedSequence(int(seed), spawn_key=(k,)).generate_state(1, np.uint64)[0] >> 1)

    rows = []
    for k in range(k_min, k_max + 1):
        model = fit(X, k, kseed(k), max_iter=max_iter, tol=tol, n_restarts=n_restarts)
        sil = silhouette(D, model.labels).score
        rows.append(KSweepRow(k, sil, distortion(model, X), model.inertia, model.seed))

    anchor = {}
    anchor_k = k_min - 1
    anchor_model = fit(X, anchor_k, kseed(anchor_k), max_iter=max_iter, tol=tol, n_restarts=n_restarts)
    anchor[anchor_k] = distortion(anchor_model, X)

    curve = dict(anchor)
    curve.update({r.k: r.distortion for r in rows})
    eb = elbow(curve)
    report = KSweepReport(rows, eb.k, eb.weak, anchor_distortion=anchor, seed=int(seed))
    report.recommended_k, report.rationale = recommend(report)
    return report
