"""Black Sigatoka infection-risk model.

Spore cohorts germinate during wet periods (>= 3 contiguous 6-hourly points
with canopy moisture > 0 m or relative humidity > 98%). Growth rate depends
on temperature through a cardinal-temperature response; infection pressure
accumulates as a Weibull cumulative hazard, and the risk series y records,
per grid point, the newly infected cohort fraction scaled by the cohort count.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .climate import STEP_HOURS, ClimateSeries, _parse_climate_rows, save_climate_csv


@dataclass(frozen=True)
class CardinalTemperatures:
    """Minimum / optimum / maximum temperatures bounding pathogen growth (deg C)."""

    t_min: float = 16.6
    t_opt: float = 27.2
    t_max: float = 30.3

    def __post_init__(self):
        if not (self.t_min < self.t_opt < self.t_max):
            raise ValueError(f"need t_min < t_opt < t_max, got {self}")


@dataclass(frozen=True)
class SurvivalParams:
    """Cardinal temperatures plus Weibull scale alpha (hours), shape gamma,
    and cohort count beta. Defaults are the best-fit values for black Sigatoka."""

    cardinals: CardinalTemperatures = CardinalTemperatures()
    alpha: float = 32.6
    gamma: float = 1.76
    beta: float = 37.6

    def __post_init__(self):
        if self.alpha <= 0 or self.gamma <= 0 or self.beta <= 0:
            raise ValueError("alpha, gamma, beta must all be > 0")


@dataclass(frozen=True)
class WetPeriod:
    """Maximal run of >= 3 contiguous wet grid points, inclusive indices."""

    start: int
    end: int

    def __post_init__(self):
        if self.end - self.start + 1 < 3:
            raise ValueError("wet period must span at least 3 grid points")

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class DiseaseDataset:
    """Climate series joined with the generated infection-risk variable y."""

    climate: ClimateSeries
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        y.flags.writeable = False
        object.__setattr__(self, "y", y)
        if len(y) != len(self.climate):
            raise ValueError("y must align with the climate series")
        if np.any(y < 0.0):
            raise ValueError("y must be >= 0 everywhere")

    def __len__(self) -> int:
        return len(self.y)


def relative_rate(temperature, cardinals: CardinalTemperatures = CardinalTemperatures()):
    """Relative spore growth rate in [0, 1].

    Peaks at exactly 1.0 at t_opt and is clamped to 0 at and beyond both
    cardinal extremes, where the response formula would go negative or
    complex. Accepts scalars or arrays.
    """
    t = np.asarray(temperature, dtype=np.float64)
    c = cardinals
    inside = (t > c.t_min) & (t < c.t_max)
    exponent = (c.t_opt - c.t_min) / (c.t_max - c.t_opt)
    safe_t = np.where(inside, t, c.t_opt)
    r = ((c.t_max - safe_t) / (c.t_max - c.t_opt)) \
        * ((safe_t - c.t_min) / (c.t_opt - c.t_min)) ** exponent
    r = np.where(inside, r, 0.0)
    if np.ndim(temperature) == 0:
        return float(r)
    return r


def weibull_hazard(t_hours, temperature, params: SurvivalParams = SurvivalParams()):
    """Cumulative Weibull hazard r(T) * (t / alpha) ** gamma for t >= 0 hours."""
    t = np.asarray(t_hours, dtype=np.float64)
    if np.any(t < 0.0):
        raise ValueError("hazard time must be >= 0 hours")
    h = relative_rate(temperature, params.cardinals) * (t / params.alpha) ** params.gamma
    if np.ndim(t_hours) == 0 and np.ndim(temperature) == 0:
        return float(h)
    return h


def infected_fraction(hazard):
    """Fraction of a spore cohort that has infected the leaf: 1 - exp(-H)."""
    h = np.asarray(hazard, dtype=np.float64)
    if np.any(h < 0.0):
        raise ValueError("cumulative hazard must be >= 0")
    f = -np.expm1(-h)
    if np.ndim(hazard) == 0:
        return float(f)
    return f


def cohort_infections(fraction, beta: float):
    """Number of infecting cohorts: beta * F, in [0, beta] for F in [0, 1]."""
    f = np.asarray(fraction, dtype=np.float64)
    y = beta * f
    if np.ndim(fraction) == 0:
        return float(y)
    return y


def is_wet(series: ClimateSeries) -> np.ndarray:
    """Pointwise wetness predicate: CM > 0 m or RH > 98%."""
    return (series.cm > 0.0) | (series.rh > 98.0)


def detect_wet_periods(series: ClimateSeries) -> list[WetPeriod]:
    """All maximal wet runs of length >= 3, disjoint and sorted by start."""
    wet = is_wet(series)
    periods: list[WetPeriod] = []
    run_start = None
    for i, flag in enumerate(wet):
        if flag and run_start is None:
            run_start = i
        elif not flag and run_start is not None:
            if i - run_start >= 3:
                periods.append(WetPeriod(run_start, i - 1))
            run_start = None
    if run_start is not None and len(wet) - run_start >= 3:
        periods.append(WetPeriod(run_start, len(wet) - 1))
    return periods


def save_dataset_csv(ds: DiseaseDataset, path: str | Path) -> None:
    """Climate CSV contract plus a y_cohorts column."""
    save_climate_csv(ds.climate, path, extra={"y_cohorts": ds.y})


def load_dataset_csv(path: str | Path) -> DiseaseDataset:
    path = Path(path)
    with path.open("r", newline="") as fh:
        series, (y,) = _parse_climate_rows(fh, coordinate_id=path.stem,
                                           extra_cols=["y_cohorts"])
    return DiseaseDataset(climate=series, y=y)


def generate_infection_series(series: ClimateSeries,
                              params: SurvivalParams = SurvivalParams()) -> DiseaseDataset:
    """Generate the ground-truth infection-risk series y from a climate series.

    Within each wet period one spore cohort is launched at every grid point.
    A cohort's clock runs in hours since its launch; over each 6-hour step it
    accrues the hazard increment r(T_now) * ((t/alpha)**gamma - ((t-6)/alpha)**gamma)
    using the temperature at the current grid point, so hazard never decreases.
    The recorded risk y_i is the sum over active cohorts of beta times the
    step's increment of infected fraction. Cohorts die when their wet period
    ends; y is 0 at every point outside wet periods and at a period's first
    point (all clocks there are at 0). Deterministic.
    """
    n = len(series)
    y = np.zeros(n, dtype=np.float64)
    scaled_time = (STEP_HOURS / params.alpha) ** params.gamma

    for period in detect_wet_periods(series):
        length = len(period)
        # per-cohort state, one slot per launch point already passed
        hazard = np.empty(length, dtype=np.float64)
        fraction = np.empty(length, dtype=np.float64)
        active = 0
        for offset in range(length):
            i = period.start + offset
            if active:
                # cohort k (0-based, launched at period.start + k) has been
                # alive offset - k steps; (t/alpha)**gamma in step units
                steps_alive = np.arange(offset, offset - active, -1, dtype=np.float64)
                rate = relative_rate(float(series.t[i]), params.cardinals)
                increment = rate * scaled_time * (
                    steps_alive ** params.gamma - (steps_alive - 1.0) ** params.gamma)
                hazard[:active] += increment
                new_fraction = -np.expm1(-hazard[:active])
                y[i] = params.beta * float(np.sum(new_fraction - fraction[:active]))
                fraction[:active] = new_fraction
            # launch this grid point's cohort with a zeroed clock
            hazard[active] = 0.0
            fraction[active] = 0.0
            active += 1

    return DiseaseDataset(climate=series, y=y)
