"""Microclimate series: CSV ingestion, validation, normalization, synthesis,
and continuous interpolation of the predictor variables.

The on-disk contract is a CSV with header ``timestamp,rh_percent,t_celsius,cm_meters``,
ISO-8601 UTC timestamps on a strict 6-hourly grid, decimal point ``.``, LF line
endings. Gaps are rejected, never imputed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

STEP_HOURS = 6.0
STEP = timedelta(hours=6)

CSV_HEADER = ["timestamp", "rh_percent", "t_celsius", "cm_meters"]

CLIMATE_VARS = ("rh", "t", "cm")


class ClimateCSVError(ValueError):
    """Parse/validation failure; carries the offending row (1-based data row) and field."""

    def __init__(self, message: str, row: int | None = None, fieldname: str | None = None):
        self.row = row
        self.fieldname = fieldname
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", field {fieldname!r})" if fieldname else ")")
        super().__init__(message + where)


class DegenerateStatsError(ValueError):
    """A variable has zero sample variance over the requested range."""


def _parse_timestamp(text: str) -> datetime:
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None or ts.utcoffset() != timedelta(0):
        raise ValueError("timestamp must be UTC")
    return ts.astimezone(timezone.utc)


def _format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class ClimateSeries:
    """Uniform 6-hourly multivariate series for one coordinate.

    rh is relative humidity in percent [0, 100], t is canopy temperature in
    deg C (unconstrained), cm is canopy moisture storage in meters (>= 0).
    Immutable after construction; arrays are float64 and non-writable.
    """

    coordinate_id: str
    start_time: datetime
    rh: np.ndarray
    t: np.ndarray
    cm: np.ndarray

    def __post_init__(self):
        for name in CLIMATE_VARS:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        n = len(self.rh)
        if n < 1 or len(self.t) != n or len(self.cm) != n:
            raise ValueError("rh, t, cm must have equal length >= 1")
        if self.start_time.tzinfo is None:
            raise ValueError("start_time must be timezone-aware UTC")
        if np.any(self.rh < 0.0) or np.any(self.rh > 100.0):
            raise ValueError("rh out of range [0, 100]")
        if np.any(self.cm < 0.0):
            raise ValueError("cm must be >= 0")
        for name in CLIMATE_VARS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    def __len__(self) -> int:
        return len(self.rh)

    def timestamp(self, index: int) -> datetime:
        return self.start_time + index * STEP

    def values(self) -> np.ndarray:
        """Stacked [N, 3] array with columns rh, t, cm."""
        return np.column_stack([self.rh, self.t, self.cm])


@dataclass(frozen=True)
class NormalizationStats:
    """Per-variable mean/std, computed on the training split only. Immutable."""

    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        mean.flags.writeable = False
        std.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        if not (len(self.names) == len(mean) == len(std)):
            raise ValueError("names, mean, std must align")
        if np.any(std <= 0.0):
            raise DegenerateStatsError("std must be > 0 for every variable")

    def index(self, name: str) -> int:
        return self.names.index(name)

    def normalize(self, name: str, values: np.ndarray) -> np.ndarray:
        i = self.index(name)
        return (np.asarray(values, dtype=np.float64) - self.mean[i]) / self.std[i]

    def denormalize(self, name: str, values: np.ndarray) -> np.ndarray:
        i = self.index(name)
        return np.asarray(values, dtype=np.float64) * self.std[i] + self.mean[i]


def compute_stats(series: ClimateSeries, index_range: tuple[int, int] | None = None) -> NormalizationStats:
    """Sample mean/std (ddof=1) of rh, t, cm over [start, stop) indices.

    Raises DegenerateStatsError for ranges of length < 2 or any constant variable.
    """
    start, stop = index_range if index_range is not None else (0, len(series))
    if not (0 <= start < stop <= len(series)):
        raise ValueError(f"index range [{start}, {stop}) out of bounds for length {len(series)}")
    if stop - start < 2:
        raise DegenerateStatsError("need at least 2 points for a sample std")
    means, stds = [], []
    for name in CLIMATE_VARS:
        chunk = getattr(series, name)[start:stop]
        means.append(float(np.mean(chunk)))
        sd = float(np.std(chunk, ddof=1))
        if sd == 0.0:
            raise DegenerateStatsError(f"variable {name!r} is constant over the range")
        stds.append(sd)
    return NormalizationStats(CLIMATE_VARS, np.array(means), np.array(stds))


def normalize(series: ClimateSeries, stats: NormalizationStats) -> np.ndarray:
    """Normalized [N, 3] predictor array with columns rh, t, cm."""
    cols = [stats.normalize(name, getattr(series, name)) for name in CLIMATE_VARS]
    return np.column_stack(cols)


def denormalize(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Inverse of normalize; exact to floating-point roundoff."""
    values = np.asarray(values, dtype=np.float64)
    cols = [stats.denormalize(name, values[:, i]) for i, name in enumerate(CLIMATE_VARS)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class PredictorInterpolant:
    """Piecewise-linear interpolant over a normalized [N, 3] predictor grid.

    Defined for real t in [0, N-1] step units, exact at the grid points.
    With clamp=True, queries outside the domain return the boundary value
    (extrapolation mode); otherwise they raise ValueError.
    """

    values: np.ndarray
    clamp: bool = False
    scheme: str = field(default="linear")

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("values must be a [N >= 1, k] array")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.scheme != "linear":
            raise ValueError(f"unsupported interpolation scheme {self.scheme!r}")

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    def at(self, t: float) -> np.ndarray:
        n = self.n_points
        if self.clamp:
            t = min(max(t, 0.0), float(n - 1))
        elif not (0.0 <= t <= n - 1):
            raise ValueError(f"t = {t} outside interpolation domain [0, {n - 1}]")
        k = int(np.floor(t))
        if k >= n - 1:
            return self.values[n - 1]
        lam = t - k
        if lam == 0.0:
            return self.values[k]
        return (1.0 - lam) * self.values[k] + lam * self.values[k + 1]


def load_climate_csv(path: str | Path) -> ClimateSeries:
    """Parse and validate a climate CSV into a ClimateSeries.

    Errors name the 1-based data row and field: missing/extra columns,
    unparseable values, non-monotone timestamps, gaps != 6 h, RH outside
    [0, 100], CM < 0.
    """
    path = Path(path)
    with path.open("r", newline="") as fh:
        return _parse_climate_rows(fh, coordinate_id=path.stem)


def _parse_climate_rows(fh, coordinate_id: str, extra_cols: Sequence[str] = ()) -> ClimateSeries:
    expected = CSV_HEADER + list(extra_cols)
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ClimateCSVError("empty file: missing header")
    if header != expected:
        missing = [c for c in expected if c not in header]
        if missing:
            raise ClimateCSVError(f"missing column(s) {missing}; expected header {expected}")
        raise ClimateCSVError(f"bad header {header}; expected {expected}")

    times: list[datetime] = []
    cols: list[list[float]] = [[] for _ in range(len(expected) - 1)]
    for i, row in enumerate(reader, start=1):
        if len(row) != len(expected):
            raise ClimateCSVError(f"expected {len(expected)} fields, got {len(row)}", row=i)
        try:
            ts = _parse_timestamp(row[0])
        except ValueError as exc:
            raise ClimateCSVError(f"bad timestamp {row[0]!r}: {exc}", row=i, fieldname="timestamp")
        if times:
            gap = ts - times[-1]
            if gap <= timedelta(0):
                raise ClimateCSVError("timestamps not strictly increasing", row=i, fieldname="timestamp")
            if gap != STEP:
                raise ClimateCSVError(
                    f"grid gap of {gap} between rows {i - 1} and {i}; expected 6h",
                    row=i, fieldname="timestamp",
                )
        times.append(ts)
        for j, (name, text) in enumerate(zip(expected[1:], row[1:])):
            try:
                value = float(text)
            except ValueError:
                raise ClimateCSVError(f"unparseable number {text!r}", row=i, fieldname=name)
            if not np.isfinite(value):
                raise ClimateCSVError(f"non-finite value {text!r}", row=i, fieldname=name)
            if name == "rh_percent" and not (0.0 <= value <= 100.0):
                raise ClimateCSVError(f"RH = {value} outside [0, 100]", row=i, fieldname=name)
            if name == "cm_meters" and value < 0.0:
                raise ClimateCSVError(f"CM = {value} < 0", row=i, fieldname=name)
            if name == "y_cohorts" and value < 0.0:
                raise ClimateCSVError(f"y = {value} < 0", row=i, fieldname=name)
            cols[j].append(value)
    if not times:
        raise ClimateCSVError("no data rows")

    series = ClimateSeries(
        coordinate_id=coordinate_id,
        start_time=times[0],
        rh=np.array(cols[0]),
        t=np.array(cols[1]),
        cm=np.array(cols[2]),
    )
    if extra_cols:
        return series, [np.array(c) for c in cols[3:]]
    return series


def save_climate_csv(series: ClimateSeries, path: str | Path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write the CSV contract; floats use shortest round-trip repr so that
    load(save(s)) reproduces field values bit-exactly."""
    extra = extra or {}
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER + list(extra))
    columns = [series.rh, series.t, series.cm] + [np.asarray(v) for v in extra.values()]
    for k in range(len(series)):
        row = [_format_timestamp(series.timestamp(k))] + [repr(float(c[k])) for c in columns]
        writer.writerow(row)
    path.write_text(buf.getvalue())


@dataclass(frozen=True)
class SynthProfile:
    """Amplitudes for the synthetic-climate generator.

    Each variable is mean + annual sinusoid + diurnal sinusoid + seeded
    Gaussian noise; RH is clamped to [0, 100] and CM to >= 0. The moisture
    channel adds a ~4-week spell oscillation so wet periods recur through
    the year rather than once per season.
    """

    rh_mean: float = 86.0
    rh_annual_amp: float = 6.0
    rh_diurnal_amp: float = 7.0
    rh_noise: float = 2.5
    t_mean: float = 25.0
    t_annual_amp: float = 2.5
    t_diurnal_amp: float = 3.5
    t_noise: float = 0.7
    cm_base: float = -0.06
    cm_annual_amp: float = 0.02
    cm_spell_amp: float = 0.12
    cm_spell_days: float = 28.0
    cm_diurnal_amp: float = 0.01
    cm_noise: float = 0.02
    start_time: datetime = datetime(2016, 1, 1, tzinfo=timezone.utc)


def synth_climate(seed: int, n: int, profile: SynthProfile | None = None,
                  coordinate_id: str = "synthetic") -> ClimateSeries:
    """Deterministic synthetic 6-hourly climate series for a given seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = profile or SynthProfile()
    rng = np.random.default_rng(seed)
    hours = STEP_HOURS * np.arange(n, dtype=np.float64)
    annual = np.sin(2.0 * np.pi * hours / (24.0 * 365.25))
    diurnal = np.sin(2.0 * np.pi * hours / 24.0)
    spell = np.sin(2.0 * np.pi * hours / (24.0 * p.cm_spell_days))

    # humid at night: diurnal humidity runs in antiphase with temperature
    rh = p.rh_mean + p.rh_annual_amp * annual - p.rh_diurnal_amp * diurnal \
        + p.rh_noise * rng.standard_normal(n)
    t = p.t_mean + p.t_annual_amp * annual + p.t_diurnal_amp * diurnal \
        + p.t_noise * rng.standard_normal(n)
    cm = p.cm_base + p.cm_annual_amp * annual + p.cm_spell_amp * spell \
        + p.cm_diurnal_amp * diurnal + p.cm_noise * rng.standard_normal(n)

    return ClimateSeries(
        coordinate_id=coordinate_id,
        start_time=p.start_time,
        rh=np.clip(rh, 0.0, 100.0),
        t=t,
        cm=np.maximum(cm, 0.0),
    )
