"""Outage observations -> gridded outage fractions -> resilience curves.

Pipeline order: regrid, missing-ratio filter, linear fill, impact filter,
negation with a prepended zero baseline.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, DomainError

log = logging.getLogger(__name__)

SCHEMAS = {
    "count": ("unit_id", "timestamp", "affected", "total"),
    "fraction": ("unit_id", "timestamp", "outage_fraction"),
}

CURVESET_FORMAT = "rescurve.curveset/1"


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC-3339 timestamp into an aware UTC datetime (seconds precision)."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp without UTC offset: {text!r}")
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class OutageObservation:
    unit_id: str
    timestamp: datetime
    fraction: float
    affected: float | None = None
    total: float | None = None


@dataclass(frozen=True)
class Reject:
    line: int
    raw: str
    reason: str


@dataclass(frozen=True)
class TimeGrid:
    start: datetime
    step: timedelta
    n_steps: int

    def __post_init__(self):
        if self.step <= timedelta(0):
            raise ConfigError(f"grid step must be positive, got {self.step}")
        if self.n_steps < 3:
            raise ConfigError(f"grid needs at least 3 steps, got {self.n_steps}")

    @property
    def end(self) -> datetime:
        return self.start + self.step * self.n_steps

    @property
    def step_seconds(self) -> int:
        return int(self.step.total_seconds())

    def cell_of(self, ts: datetime) -> int | None:
        """Index of the half-open cell containing ``ts``, or None when outside."""
        if ts < self.start or ts >= self.end:
            return None
        return int((ts - self.start) // self.step)

    def with_baseline(self) -> "TimeGrid":
        return TimeGrid(self.start - self.step, self.step, self.n_steps + 1)

    def to_dict(self) -> dict:
        return {
            "start": format_timestamp(self.start),
            "step_seconds": self.step_seconds,
            "n_steps": self.n_steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimeGrid":
        return cls(parse_timestamp(d["start"]), timedelta(seconds=d["step_seconds"]), int(d["n_steps"]))


def infer_grid(observations: Sequence[OutageObservation], step: timedelta) -> TimeGrid:
    """Smallest grid aligned to multiples of ``step`` since the Unix epoch covering all observations."""
    if not observations:
        raise DataError("cannot infer a grid from zero observations")
    epoch = datetime(1970, 1, 1, tzinfo=timezone.utc)
    first = min(o.timestamp for o in observations)
    last = max(o.timestamp for o in observations)
    start = epoch + step * ((first - epoch) // step)
    n = (last - start) // step + 1
    return TimeGrid(start, step, max(int(n), 3))


@dataclass
class GriddedSeries:
    """Per-unit outage fractions on a grid; NaN marks a missing cell."""

    unit_id: str
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_steps,):
            raise DomainError(f"{self.unit_id}: {len(self.values)} values for a {self.grid.n_steps}-step grid")
        present = self.values[~np.isnan(self.values)]
        if np.any((present < 0) | (present > 1)):
            raise DomainError(f"{self.unit_id}: fractions outside [0, 1]")

    @property
    def missing_count(self) -> int:
        return int(np.isnan(self.values).sum())


@dataclass
class ResilienceCurve:
    """Negated outage fraction with a zero baseline sample in front."""

    unit_id: str
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_steps,):
            raise DomainError(f"{self.unit_id}: {len(self.values)} values for a {self.grid.n_steps}-step grid")
        if not np.all(np.isfinite(self.values)):
            raise DomainError(f"{self.unit_id}: curve has missing or non-finite values")
        if self.values[0] != 0.0:
            raise DomainError(f"{self.unit_id}: baseline sample must be exactly 0")
        if np.any((self.values < -1) | (self.values > 0)):
            raise DomainError(f"{self.unit_id}: curve values outside [-1, 0]")

    @property
    def max_loss(self) -> float:
        return float(-self.values.min())


@dataclass
class DropRecord:
    unit_id: str
    reason: str


@dataclass
class CurveSet:
    event_name: str
    curves: list[ResilienceCurve]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.curves:
            g = self.curves[0].grid
            for c in self.curves[1:]:
                if c.grid.n_steps != g.n_steps or c.grid.step != g.step:
                    raise DomainError(f"curve {c.unit_id} does not share the set's grid")

    def __len__(self):
        return len(self.curves)

    @property
    def grid(self) -> TimeGrid:
        return self.curves[0].grid

    @property
    def unit_ids(self) -> list[str]:
        return [c.unit_id for c in self.curves]

    def matrix(self) -> np.ndarray:
        return np.vstack([c.values for c in self.curves])

    def to_dict(self) -> dict:
        return {
            "format": CURVESET_FORMAT,
            "event_name": self.event_name,
            "grid": self.grid.to_dict(),
            "curves": [{"unit_id": c.unit_id, "values": c.values.tolist()} for c in self.curves],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurveSet":
        if d.get("format") != CURVESET_FORMAT:
            raise DataError(f"not a curve-set file (format={d.get('format')!r})")
        if not d.get("curves"):
            raise DataError("curve-set file contains no curves")
        grid = TimeGrid.from_dict(d["grid"])
        curves = [ResilienceCurve(c["unit_id"], grid, c["values"]) for c in d["curves"]]
        return cls(d.get("event_name", ""), curves, d.get("provenance", {}))

    @classmethod
    def load(cls, path: str | Path) -> "CurveSet":
        try:
            with open(path, encoding="utf-8") as f:
                d = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc
        try:
            return cls.from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: malformed curve-set ({exc})") from exc


def outage_fraction(affected: float, total: float) -> float:
    """``affected / total``, clamped to 1 with a warning when counts overshoot the base."""
    if total == 0:
        raise DomainError("total must be positive, got 0")
    if total < 0 or affected < 0:
        raise DomainError(f"counts must be non-negative (affected={affected}, total={total})")
    frac = affected / total
    if frac > 1.0:
        log.warning("affected %s exceeds total %s; clamping fraction to 1.0", affected, total)
        return 1.0
    return frac


def _parse_row(row: dict, schema: str) -> OutageObservation:
    unit = (row.get("unit_id") or "").strip()
    if not unit:
        raise ValueError("empty unit_id")
    ts = parse_timestamp(row["timestamp"])
    if schema == "count":
        affected = float(row["affected"])
        total = float(row["total"])
        if not (math.isfinite(affected) and math.isfinite(total)):
            raise ValueError("non-finite count")
        if total <= 0:
            raise ValueError(f"total must be positive, got {total:g}")
        if affected < 0:
            raise ValueError(f"affected must be non-negative, got {affected:g}")
        return OutageObservation(unit, ts, outage_fraction(affected, total), affected, total)
    frac = float(row["outage_fraction"])
    if not (math.isfinite(frac) and 0.0 <= frac <= 1.0):
        raise ValueError(f"outage_fraction {frac!r} outside [0, 1]")
    return OutageObservation(unit, ts, frac)


def parse_observations(source: str | Path | IO[str], schema: str) -> tuple[list[OutageObservation], list[Reject]]:
    """Read a CSV of outage observations.

    Returns the observations in input order together with a list of rejected
    rows. Raises ConfigError for an unknown schema and DataError when the
    header lacks the schema's columns or more than half the rows are rejected.
    """
    if schema not in SCHEMAS:
        raise ConfigError(f"unknown schema {schema!r}; expected one of {sorted(SCHEMAS)}")
    if isinstance(source, (str, Path)):
        try:
            with open(source, encoding="utf-8", newline="") as f:
                text = f.read()
        except OSError as exc:
            raise DataError(f"cannot read {source}: {exc}") from exc
        stream: IO[str] = io.StringIO(text)
    else:
        stream = source

    reader = csv.DictReader(stream)
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in SCHEMAS[schema] if c not in header]
    if missing:
        raise DataError(f"header {header} lacks columns {missing} required by schema {schema!r}")
    reader.fieldnames = header

    observations: list[OutageObservation] = []
    rejects: list[Reject] = []
    n_rows = 0
    for row in reader:
        n_rows += 1
        try:
            observations.append(_parse_row(row, schema))
        except (ValueError, TypeError, KeyError, DomainError) as exc:
            raw = ",".join("" if v is None else str(v) for v in row.values())
            rejects.append(Reject(reader.line_num, raw, str(exc)))

    if n_rows == 0:
        log.warning("input has a header but no data rows")
    elif len(rejects) / n_rows > 0.5:
        raise DataError(
            f"{len(rejects)} of {n_rows} rows rejected (first: line {rejects[0].line}: {rejects[0].reason}); "
            f"is the schema {schema!r} right?"
        )
    return observations, rejects


def regrid(observations: Iterable[OutageObservation], grid: TimeGrid) -> tuple[list[GriddedSeries], int]:
    """Average observation fractions per grid cell and unit.

    Returns one series per unit (sorted by unit_id) and the number of
    observations that fell outside the grid.
    """
    cells: dict[str, dict[int, list[float]]] = {}
    outside = 0
    for obs in observations:
        idx = grid.cell_of(obs.timestamp)
        if idx is None:
            outside += 1
            continue
        cells.setdefault(obs.unit_id, {}).setdefault(idx, []).append(obs.fraction)

    series = []
    for unit in sorted(cells):
        values = np.full(grid.n_steps, np.nan)
        for idx, fracs in cells[unit].items():
            # fsum keeps the mean independent of observation order
            values[idx] = math.fsum(fracs) / len(fracs)
        series.append(GriddedSeries(unit, grid, values))
    if outside:
        log.info("%d observations outside the grid were ignored", outside)
    return series, outside


def fill_linear(series: GriddedSeries) -> GriddedSeries:
    """Interpolate interior gaps linearly; hold the nearest value across leading/trailing gaps."""
    v = series.values
    present = ~np.isnan(v)
    if not present.any():
        raise DomainError(f"{series.unit_id}: series has no present values")
    if present.all():
        return GriddedSeries(series.unit_id, series.grid, v.copy())
    x = np.arange(len(v))
    filled = np.interp(x, x[present], v[present])
    return GriddedSeries(series.unit_id, series.grid, filled)


def qc_filter(
    series_set: Sequence[GriddedSeries],
    max_missing_ratio: float = 0.5,
    min_peak: float = 0.10,
) -> tuple[list[GriddedSeries], list[DropRecord]]:
    """Drop sparse and low-impact series; retained series come back gap-filled."""
    if not 0.0 <= max_missing_ratio <= 1.0:
        raise ConfigError(f"max_missing_ratio must lie in [0, 1], got {max_missing_ratio}")
    if not 0.0 <= min_peak <= 1.0:
        raise ConfigError(f"min_peak must lie in [0, 1], got {min_peak}")
    if not series_set:
        raise DataError("no series to filter")
    n_steps = {s.grid.n_steps for s in series_set}
    if len(n_steps) != 1:
        raise DomainError("series do not share a grid")

    dropped: list[DropRecord] = []
    dense = []
    for s in series_set:
        ratio = s.missing_count / s.grid.n_steps
        if ratio > max_missing_ratio:
            dropped.append(DropRecord(s.unit_id, f"missing {ratio:.3f} > {max_missing_ratio:g}"))
        else:
            dense.append(fill_linear(s))

    retained = []
    n_low = 0
    for s in dense:
        peak = float(s.values.max())
        if peak < min_peak:
            n_low += 1
            dropped.append(DropRecord(s.unit_id, f"peak {peak:.2f} < {min_peak:.2f}"))
        else:
            retained.append(s)

    if not retained:
        raise DataError(
            f"all {len(series_set)} units dropped: {len(series_set) - len(dense)} by the missing-ratio filter "
            f"(> {max_missing_ratio:g}), {n_low} by the impact filter (peak outage < {min_peak:.0%})"
        )
    return retained, dropped


def to_resilience_curve(series: GriddedSeries) -> ResilienceCurve:
    """Negate the outage fractions and prepend one baseline sample of exactly 0."""
    if np.isnan(series.values).any():
        raise DomainError(f"{series.unit_id}: series still has missing values")
    values = np.concatenate([[0.0], -series.values])
    values[values == 0] = 0.0  # no negative zeros
    return ResilienceCurve(series.unit_id, series.grid.with_baseline(), values)


def build_curve_set(
    observations: Sequence[OutageObservation],
    grid: TimeGrid,
    event_name: str = "",
    max_missing_ratio: float = 0.5,
    min_peak: float = 0.10,
    source: str | None = None,
    n_rejected_rows: int = 0,
) -> CurveSet:
    """Run the full ingest pipeline and attach the drop report as provenance."""
    series, outside = regrid(observations, grid)
    if not series:
        raise DataError("no observations fall inside the grid")
    retained, dropped = qc_filter(series, max_missing_ratio, min_peak)
    curves = [to_resilience_curve(s) for s in retained]
    provenance = {
        "source": source,
        "filters": {"max_missing_ratio": max_missing_ratio, "min_peak": min_peak},
        "n_units_in": len(series),
        "n_units_retained": len(curves),
        "n_observations_outside_grid": outside,
        "n_rejected_rows": n_rejected_rows,
        "dropped": [{"unit_id": d.unit_id, "reason": d.reason} for d in sorted(dropped, key=lambda d: d.unit_id)],
    }
    return CurveSet(event_name, curves, provenance)
