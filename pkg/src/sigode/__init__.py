"""Black Sigatoka infection-risk generation and latent-ODE forecasting."""

__version__ = "0.1.0"

from .climate import (
    ClimateSeries,
    NormalizationStats,
    PredictorInterpolant,
    SynthProfile,
    compute_stats,
    load_climate_csv,
    normalize,
    save_climate_csv,
    synth_climate,
)
from .sigatoka import (
    CardinalTemperatures,
    DiseaseDataset,
    SurvivalParams,
    WetPeriod,
    cohort_infections,
    detect_wet_periods,
    generate_infection_series,
    infected_fraction,
    load_dataset_csv,
    relative_rate,
    save_dataset_csv,
    weibull_hazard,
)

__all__ = [
    "__version__",
    "ClimateSeries", "NormalizationStats", "PredictorInterpolant", "SynthProfile",
    "compute_stats", "load_climate_csv", "normalize", "save_climate_csv", "synth_climate",
    "CardinalTemperatures", "DiseaseDataset", "SurvivalParams", "WetPeriod",
    "cohort_infections", "detect_wet_periods", "generate_infection_series",
    "infected_fraction", "load_dataset_csv", "relative_rate", "save_dataset_csv",
    "weibull_hazard",
]
