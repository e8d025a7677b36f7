"""Gradient analysis of (cluster-average) resilience curves.

Curves are classified as Triangular, Trapezoidal, Transitional or Flat and
the archetype's properties are measured on the sample grid:

* sustained loss: the run of samples at maximum loss, starting at t_min
* recovery turning points: samples where the forward gradient changes sharply
* recovery pivot: a fast-to-slow change in recovery speed; the curve level
  there is the critical functionality threshold

All times are sample indices and all rates are performance units per grid
step unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError

TRIANGULAR = "Triangular"
TRAPEZOIDAL = "Trapezoidal"
TRANSITIONAL = "Transitional"
FLAT = "Flat"
LABELS = (TRIANGULAR, TRAPEZOIDAL, TRANSITIONAL, FLAT)


@dataclass
class GradientProfile:
    values: np.ndarray
    gradients: np.ndarray
    pc: np.ndarray  # NaN where the previous gradient is below eps_grad
    eps_grad: float

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "gradients": self.gradients.tolist(),
            "pct_change": [None if np.isnan(x) else float(x) for x in self.pc],
            "eps_grad": self.eps_grad,
        }


def percentage_change(gradients, eps_grad: float = 0.01) -> np.ndarray:
    """(g[t] - g[t-1]) / |g[t-1]|, NaN when |g[t-1]| < eps_grad."""
    g = np.asarray(gradients, dtype=float)
    prev, nxt = g[:-1], g[1:]
    defined = np.abs(prev) >= eps_grad
    out = np.full(len(nxt), np.nan)
    out[defined] = (nxt[defined] - prev[defined]) / np.abs(prev[defined])
    return out


def gradient_profile(curve, eps_grad: float = 0.01) -> GradientProfile:
    v = np.asarray(getattr(curve, "values", curve), dtype=float)
    if v.ndim != 1 or len(v) < 3:
        raise DomainError("gradient profile needs a curve of at least 3 samples")
    if eps_grad < 0:
        raise DomainError("eps_grad must be non-negative")
    g = np.diff(v)
    return GradientProfile(v, g, percentage_change(g, eps_grad), eps_grad)


def change_strength(prev: float, nxt: float) -> float:
    """Relative gradient change, measured against the smaller of the two magnitudes.

    Symmetric under swapping ``prev`` and ``nxt``, so halving and doubling a
    rate both score 1.0. Infinite when one side is exactly zero.
    """
    lo = min(abs(prev), abs(nxt))
    diff = abs(nxt - prev)
    if lo > 0:
        with np.errstate(over="ignore"):
            return float(np.float64(diff) / lo)  # subnormal lo overflows to inf, which is the intent
    return np.inf if diff > 0 else 0.0


def loss_window(values, plateau_tol: float = 0.02) -> tuple[int, int]:
    """First sample within ``plateau_tol * max_loss`` of the minimum, and the last sample of that run."""
    v = np.asarray(values, dtype=float)
    vmin = v.min()
    level = vmin + plateau_tol * abs(vmin)
    near = v <= level
    t_min = int(np.argmax(near))
    t_end = t_min
    while t_end + 1 < len(v) and near[t_end + 1]:
        t_end += 1
    return t_min, t_end


@dataclass
class TurningPoint:
    t: int  # sample index where the gradient changes
    kind: str  # onset | slowdown | speedup | fake peak
    strength: float
    gradient_before: float
    gradient_after: float
    pct_change: float | None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strength"] = None if not np.isfinite(self.strength) else self.strength
        return d


@dataclass
class TurningPoints:
    t_min: int
    plateau_end: int
    recovery_end: int  # sample after the last significant recovery gradient
    accepted: list[TurningPoint]
    suppressed: list[TurningPoint]
    eps_grad: float

    def after(self, t: int) -> list[TurningPoint]:
        return [tp for tp in self.accepted if tp.t > t]


def detect_turning_points(profile: GradientProfile, pc_peak_threshold: float = 1.0,
                          plateau_tol: float = 0.02) -> TurningPoints:
    """Recovery-phase turning points of a gradient profile.

    Candidates are samples after t_min whose gradient-change strength exceeds
    ``pc_peak_threshold`` and is a local maximum among recovery-phase samples.
    A candidate is accepted when the gradient after it is a significant
    recovery gradient (>= eps_grad). Candidates where both neighbouring
    gradients are below eps_grad are returned as suppressed fake peaks;
    candidates where the gradient falls to ~0 mark the end of recovery and
    are dropped.
    """
    v, g, eps = profile.values, profile.gradients, profile.eps_grad
    t_min, plateau_end = loss_window(v, plateau_tol)

    significant = np.flatnonzero(g >= eps)
    significant = significant[significant >= t_min]
    recovery_end = int(significant[-1]) + 1 if significant.size else t_min

    ts = np.arange(t_min + 1, len(v) - 1)
    strength = np.array([change_strength(g[t - 1], g[t]) for t in ts])

    accepted, suppressed = [], []
    for idx, t in enumerate(ts):
        s = strength[idx]
        if not s > pc_peak_threshold:
            continue
        left = strength[idx - 1] if idx > 0 else -np.inf
        right = strength[idx + 1] if idx + 1 < len(ts) else -np.inf
        if s < left or s < right:
            continue
        before, after = float(g[t - 1]), float(g[t])
        pc = profile.pc[t - 1]
        pc = None if np.isnan(pc) else float(pc)
        if abs(before) < eps and abs(after) < eps:
            suppressed.append(TurningPoint(int(t), "fake peak", float(s), before, after, pc))
        elif after >= eps:
            if before < eps:
                kind = "onset"
            elif after < before:
                kind = "slowdown"
            else:
                kind = "speedup"
            accepted.append(TurningPoint(int(t), kind, float(s), before, after, pc))
    return TurningPoints(t_min, plateau_end, recovery_end, accepted, suppressed, eps)


@dataclass
class ArchetypeProperties:
    t_min: int | None = None
    max_loss: float | None = None
    plateau_duration: int | None = None
    constant_recovery_rate: float | None = None
    pivot_time: int | None = None
    critical_functionality_threshold: float | None = None
    fast_rate: float | None = None
    slow_rate: float | None = None
    fully_recovered: bool | None = None
    partial: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self, step_days: float | None = None) -> dict:
        d = asdict(self)
        if step_days:
            for key in ("constant_recovery_rate", "fast_rate", "slow_rate"):
                if d[key] is not None:
                    d[key + "_per_day"] = d[key] / step_days
        return d


@dataclass
class ArchetypeReport:
    label: str
    properties: ArchetypeProperties
    turning_points: TurningPoints
    profile: GradientProfile
    cluster: int | None = None

    @property
    def evidence(self) -> list[dict]:
        out = [tp.to_dict() for tp in self.turning_points.accepted]
        out += [tp.to_dict() for tp in self.turning_points.suppressed]
        return sorted(out, key=lambda d: d["t"])

    def to_dict(self, step_days: float | None = None) -> dict:
        return {
            "cluster": self.cluster,
            "label": self.label,
            "properties": self.properties.to_dict(step_days),
            "evidence": self.evidence,
            "triptych": self.profile.to_dict(),
        }


def _mean_rate(v, a, b) -> float:
    return float((v[b] - v[a]) / (b - a))


def _base_properties(v, tps: TurningPoints, eps_rec: float) -> ArchetypeProperties:
    return ArchetypeProperties(
        t_min=tps.t_min,
        max_loss=float(-v.min()),
        fully_recovered=bool(v[-1] >= -eps_rec),
    )


def find_pivot(curve, tps: TurningPoints, recovery_start: int, min_stage: int = 2) -> TurningPoint | None:
    """Strongest fast-to-slow turning point strictly inside the recovery.

    The slow stage must last at least ``min_stage`` steps and the mean rate
    before the pivot must exceed the mean rate after it.
    """
    v = np.asarray(getattr(curve, "values", curve), dtype=float)
    best = None
    for tp in tps.after(recovery_start):
        if tp.kind != "slowdown" or tps.recovery_end - tp.t < min_stage:
            continue
        fast = _mean_rate(v, recovery_start, tp.t)
        slow = _mean_rate(v, tp.t, tps.recovery_end)
        if not fast > slow:
            continue
        if best is None or tp.strength > best.strength:
            best = tp
    return best


def trapezoid_properties(curve, tps: TurningPoints, eps_rec: float = 0.02) -> ArchetypeProperties:
    """Sustained-loss duration and constant recovery rate.

    The recovery turning point is the first accepted turning point at or
    after the end of the maximum-loss run.
    """
    v = np.asarray(getattr(curve, "values", curve), dtype=float)
    props = _base_properties(v, tps, eps_rec)
    exits = [tp for tp in tps.accepted if tp.t >= tps.plateau_end]
    if not exits:
        props.plateau_duration = len(v) - 1 - tps.t_min
        props.notes.append("no recovery turning point: flat-degenerate, no rate")
        return props
    t_exit = exits[0].t
    props.plateau_duration = t_exit - tps.t_min
    end = max(tps.recovery_end, t_exit + 1)
    props.constant_recovery_rate = _mean_rate(v, t_exit, end)
    if end >= len(v) - 1 and not props.fully_recovered:
        props.partial = True
        props.notes.append("recovery truncated by the end of the window; rate over observed recovery only")
    return props


def triangle_properties(curve, tps: TurningPoints, eps_rec: float = 0.02, min_stage: int = 2,
                        recovery_start: int | None = None) -> ArchetypeProperties:
    """Recovery pivot, critical functionality threshold, and fast/slow recovery rates."""
    v = np.asarray(getattr(curve, "values", curve), dtype=float)
    props = _base_properties(v, tps, eps_rec)
    start = tps.plateau_end if recovery_start is None else recovery_start
    props.plateau_duration = start - tps.t_min
    end = max(tps.recovery_end, start + 1)
    pivot = find_pivot(v, tps, start, min_stage)
    if pivot is None:
        props.constant_recovery_rate = _mean_rate(v, start, end)
        props.notes.append("single recovery rate: loss below critical threshold")
    else:
        props.pivot_time = pivot.t
        props.critical_functionality_threshold = float(-v[pivot.t])
        props.fast_rate = _mean_rate(v, start, pivot.t)
        props.slow_rate = _mean_rate(v, pivot.t, end)
    if end >= len(v) - 1 and not props.fully_recovered:
        props.partial = True
        props.notes.append("recovery truncated by the end of the window")
    return props


def classify(curve, profile: GradientProfile | None = None, *, eps_grad: float = 0.01,
             pc_peak_threshold: float = 1.0, plateau_tol: float = 0.02, min_plateau: int = 2,
             eps_rec: float = 0.02, min_stage: int = 2, cluster: int | None = None) -> ArchetypeReport:
    """Label a resilience curve and extract the properties that go with the label.

    Flat: no gradient after t_min reaches eps_grad and the curve ends below
    -eps_rec. Otherwise a sustained-loss run of >= min_plateau steps gives
    Trapezoidal (single recovery rate) or Transitional (with a pivot); a
    1-step run plus a pivot is Transitional; everything else is Triangular.
    """
    v = np.asarray(getattr(curve, "values", curve), dtype=float)
    if profile is None:
        profile = gradient_profile(v, eps_grad)
    tps = detect_turning_points(profile, pc_peak_threshold, plateau_tol)
    g = profile.gradients
    plateau = tps.plateau_end - tps.t_min

    if np.all(np.abs(g[tps.t_min:]) < profile.eps_grad) and v[-1] < -eps_rec:
        props = _base_properties(v, tps, eps_rec)
        props.plateau_duration = len(v) - 1 - tps.t_min
        props.notes.append("nearly horizontal after the loss; no recovery in the window")
        if tps.suppressed:
            props.notes.append(f"{len(tps.suppressed)} fake peak(s) ignored")
        return ArchetypeReport(FLAT, props, tps, profile, cluster)

    pivot = find_pivot(v, tps, tps.plateau_end, min_stage)
    if plateau >= 1 and pivot is not None:
        label = TRANSITIONAL
    elif plateau >= min_plateau:
        label = TRAPEZOIDAL
    else:
        label = TRIANGULAR

    if label == TRAPEZOIDAL:
        props = trapezoid_properties(v, tps, eps_rec)
    elif label == TRANSITIONAL:
        trap = trapezoid_properties(v, tps, eps_rec)
        props = triangle_properties(v, tps, eps_rec, min_stage)
        props.plateau_duration = trap.plateau_duration
        props.notes = [n for n in props.notes if not n.startswith("single")]
    else:
        props = triangle_properties(v, tps, eps_rec, min_stage)
        props.plateau_duration = plateau
    return ArchetypeReport(label, props, tps, profile, cluster)


def duration_rate_relation(reports: Sequence[ArchetypeProperties]) -> float | None:
    """Spearman correlation (midranks) of sustained-loss duration vs constant recovery rate.

    Returns None when fewer than three reports carry both values.
    """
    pairs = [(p.plateau_duration, p.constant_recovery_rate) for p in reports
             if p.plateau_duration is not None and p.constant_recovery_rate is not None]
    if len(pairs) < 3:
        return None
    x = rankdata([p[0] for p in pairs])
    y = rankdata([p[1] for p in pairs])
    x = x - x.mean()
    y = y - y.mean()
    denom = np.sqrt((x * x).sum() * (y * y).sum())
    if denom == 0:
        return 0.0
    return float((x * y).sum() / denom)
