"""Seeded piecewise-linear resilience curves with known archetype properties."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Mapping

import numpy as np

from .archetype import FLAT, LABELS, TRANSITIONAL, TRAPEZOIDAL, TRIANGULAR, ArchetypeProperties
from .errors import ConfigError
from .ingest import CurveSet, ResilienceCurve, TimeGrid

DEFAULT_START = datetime(2021, 8, 28, tzinfo=timezone.utc)
_INT_TOL = 1e-9


@dataclass(frozen=True)
class ArchetypeTemplate:
    """Shape parameters for one synthetic curve.

    Levels are positive loss magnitudes (0.2 means the curve sits at -0.2).
    Triangular and Transitional curves recover at ``fast_rate`` down to
    ``pivot_level`` and at ``slow_rate`` afterwards; without a pivot_level
    they recover at ``constant_rate``. Every segment that ends inside the
    window must span a whole number of steps. With the default classifier
    thresholds, a pivot is only visible when fast_rate > 2 * slow_rate and
    the slow stage spans at least 2 observed steps.
    """

    label: str
    max_loss: float
    length: int = 16
    t_drop: int = 1
    plateau_duration: int = 0
    pivot_level: float | None = None
    fast_rate: float | None = None
    slow_rate: float | None = None
    constant_rate: float | None = None
    noise_sigma: float = 0.0
    seed: int = 0
    step_hours: float = 24.0

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS: dict[str, ArchetypeTemplate] = {
    "triangular": ArchetypeTemplate(TRIANGULAR, max_loss=0.5, pivot_level=0.2, fast_rate=0.15, slow_rate=0.05),
    "trapezoidal": ArchetypeTemplate(TRAPEZOIDAL, max_loss=0.8, plateau_duration=5, constant_rate=0.1),
    "transitional": ArchetypeTemplate(TRANSITIONAL, max_loss=0.5, plateau_duration=1, pivot_level=0.12,
                                      fast_rate=0.19, slow_rate=0.03),
    "flat": ArchetypeTemplate(FLAT, max_loss=0.4),
}


def _steps(span: float, rate: float | None, what: str) -> float:
    if rate is None or not rate > 0:
        raise ConfigError(f"{what} must be a positive rate, got {rate}")
    return span / rate


def _knots(t: ArchetypeTemplate) -> list[tuple[float, float]]:
    ml = t.max_loss
    knots = [(0.0, 0.0)]
    if t.t_drop > 1:
        knots.append((t.t_drop - 1.0, 0.0))
    knots.append((float(t.t_drop), -ml))
    if t.label == FLAT:
        return knots
    now = float(t.t_drop + t.plateau_duration)
    if t.plateau_duration:
        knots.append((now, -ml))
    if t.label == TRAPEZOIDAL or t.pivot_level is None:
        knots.append((now + _steps(ml, t.constant_rate, "constant_rate"), 0.0))
        return knots
    pl = t.pivot_level
    if not 0 < pl < ml:
        raise ConfigError(f"pivot_level must lie in (0, max_loss), got {pl}")
    if not (t.fast_rate and t.slow_rate and t.fast_rate > t.slow_rate):
        raise ConfigError("fast_rate must exceed slow_rate")
    now += _steps(ml - pl, t.fast_rate, "fast_rate")
    knots.append((now, -pl))
    knots.append((now + _steps(pl, t.slow_rate, "slow_rate"), 0.0))
    return knots


def _validate(t: ArchetypeTemplate):
    if t.label not in LABELS:
        raise ConfigError(f"unknown archetype label {t.label!r}")
    if not 0.1 < t.max_loss <= 1.0:
        raise ConfigError(f"max_loss must lie in (0.1, 1], got {t.max_loss}")
    if t.t_drop < 1 or t.plateau_duration < 0 or t.noise_sigma < 0:
        raise ConfigError("t_drop >= 1, plateau_duration >= 0 and noise_sigma >= 0 are required")
    if t.length < 3 or t.length <= t.t_drop + t.plateau_duration:
        raise ConfigError(f"length {t.length} leaves no room after the loss")
    if t.label == TRAPEZOIDAL and t.plateau_duration < 1:
        raise ConfigError("a trapezoidal template needs a plateau")
    if t.label == TRANSITIONAL and t.pivot_level is None:
        raise ConfigError("a transitional template needs a pivot")


def _snap(x: float, last: int) -> float:
    # knots inside the window must land on samples; later ones are truncated by the window
    r = round(x)
    if abs(x - r) <= _INT_TOL * max(1.0, abs(x)):
        return float(r)
    if x < last:
        raise ConfigError(f"segment ends at fractional step {x:.6g}; rates and levels must give whole steps")
    return x


def ground_truth(t: ArchetypeTemplate) -> ArchetypeProperties:
    """Properties the noiseless curve realizes by construction."""
    _validate(t)
    knots = _knots(t)
    last = t.length - 1
    end_time = _snap(knots[-1][0], last)
    props = ArchetypeProperties(t_min=t.t_drop, max_loss=t.max_loss)
    if t.label == FLAT:
        props.plateau_duration = last - t.t_drop
        props.fully_recovered = False
        return props
    props.plateau_duration = t.plateau_duration
    props.fully_recovered = end_time <= last
    props.partial = not props.fully_recovered
    if t.label == TRAPEZOIDAL or t.pivot_level is None:
        props.constant_recovery_rate = t.max_loss / (knots[-1][0] - knots[-2][0])
    else:
        pivot = _snap(knots[-2][0], last)
        if pivot > last:
            raise ConfigError("the pivot falls outside the window")
        props.pivot_time = int(pivot)
        props.critical_functionality_threshold = t.pivot_level
        props.fast_rate = (t.max_loss - t.pivot_level) / (knots[-2][0] - knots[-3][0])
        props.slow_rate = t.pivot_level / (knots[-1][0] - knots[-2][0])
    return props


def generate(template: ArchetypeTemplate, unit_id: str | None = None,
             start: datetime = DEFAULT_START) -> tuple[ResilienceCurve, ArchetypeProperties]:
    """Piecewise-linear curve for ``template`` plus its ground-truth properties.

    Noise is seeded additive Gaussian, clamped back into [-1, 0] with the
    baseline sample pinned to 0.
    """
    _validate(template)
    truth = ground_truth(template)
    last = template.length - 1
    kt = [_snap(x, last) for x, _ in _knots(template)]
    kv = [y for _, y in _knots(template)]
    grid = np.arange(template.length, dtype=float)
    values = np.interp(grid, kt, kv)
    # exact knot values where knots land on samples
    for x, y in zip(kt, kv):
        if x == int(x) and x <= last:
            values[int(x)] = y
    if template.noise_sigma > 0:
        rng = np.random.default_rng(template.seed)
        values = values + rng.normal(0.0, template.noise_sigma, size=values.shape)
        values = np.clip(values, -1.0, 0.0)
    values[0] = 0.0
    values[values == 0] = 0.0
    tg = TimeGrid(start, timedelta(hours=template.step_hours), template.length)
    uid = unit_id or f"{template.label.lower()}-{template.seed}"
    return ResilienceCurve(uid, tg, values), truth


def generate_dataset(mixture: Mapping[str | ArchetypeTemplate, int], noise_sigma: float = 0.0,
                     seed: int = 0, event_name: str = "synthetic") -> tuple[CurveSet, list[str]]:
    """Curves for every (template, count) entry; returns the set and the per-curve true group names.

    Keys are preset names or templates. Curve i gets seed SeedSequence(seed, spawn_key=(i,)).
    """
    if not mixture or sum(mixture.values()) == 0:
        raise ConfigError("empty mixture")
    curves, truth = [], []
    i = 0
    lengths = set()
    for key, count in mixture.items():
        if isinstance(key, str):
            if key not in PRESETS:
                raise ConfigError(f"unknown preset {key!r}; choose from {sorted(PRESETS)}")
            template, name = PRESETS[key], key
        else:
            template, name = key, key.label.lower()
        if count < 0:
            raise ConfigError(f"negative count for {name}")
        lengths.add(template.length)
        for c in range(count):
            s = int(np.random.SeedSequence(int(seed), spawn_key=(i,)).generate_state(1, np.uint64)[0] >> 1)
            t = replace(template, noise_sigma=noise_sigma, seed=s)
            curve, _ = generate(t, unit_id=f"{name}-{c:03d}")
            curves.append(curve)
            truth.append(name)
            i += 1
    if len(lengths) != 1:
        raise ConfigError("all templates in a mixture must share one curve length")
    provenance = {
        "source": "synthetic",
        "seed": int(seed),
        "noise_sigma": noise_sigma,
        "mixture": {(k if isinstance(k, str) else k.label.lower()): v for k, v in mixture.items()},
    }
    return CurveSet(event_name, curves, provenance), truth


def template_from_dict(d: Mapping) -> ArchetypeTemplate:
    fields = ArchetypeTemplate.__dataclass_fields__
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError(f"unknown template fields {sorted(unknown)}")
    try:
        return ArchetypeTemplate(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

