"""Resilience-curve analytics for power outage data.

Raw outage observations are turned into normalized resilience curves,
clustered by shape with DTW k-means, and the cluster-average curves are
classified into archetypes (triangular, trapezoidal, transitional, flat).
"""

from .errors import ConfigError, DataError, DomainError, RescurveError
from .ingest import (
    CurveSet,
    GriddedSeries,
    OutageObservation,
    ResilienceCurve,
    TimeGrid,
    build_curve_set,
    fill_linear,
    outage_fraction,
    parse_observations,
    qc_filter,
    regrid,
    to_resilience_curve,
)
from .metric import DtwResult, dtw, pairwise_matrix
from .cluster import ClusterModel, adjusted_rand_index, fit, summarize
from .modelselect import KSweepReport, distortion, elbow, recommend, silhouette, sweep_k
from .archetype import (
    ArchetypeProperties,
    ArchetypeReport,
    classify,
    detect_turning_points,
    duration_rate_relation,
    gradient_profile,
)
from .synth import ArchetypeTemplate, generate, generate_dataset

__all__ = [
    "ConfigError", "DataError", "DomainError", "RescurveError",
    "CurveSet", "GriddedSeries", "OutageObservation", "ResilienceCurve", "TimeGrid",
    "build_curve_set", "fill_linear", "outage_fraction", "parse_observations", "qc_filter", "regrid",
    "to_resilience_curve",
    "DtwResult", "dtw", "pairwise_matrix",
    "ClusterModel", "adjusted_rand_index", "fit", "summarize",
    "KSweepReport", "distortion", "elbow", "recommend", "silhouette", "sweep_k",
    "ArchetypeProperties", "ArchetypeReport", "classify", "detect_turning_points", "duration_rate_relation",
    "gradient_profile",
    "ArchetypeTemplate", "generate", "generate_dataset",
]

__version__ = "0.1.0"
