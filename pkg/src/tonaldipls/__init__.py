"""Domain-invariant PLS for cross-condition prediction of 2f tonal noise."""

__version__ = "0.1.0"

from .datasets import DomainDataset, concatenate, read_dataset, read_manifest, write_dataset
from .evaluation import (EvaluationReport, FoldResult, MetricRecord, aggregate, compute_metrics,
                         evaluate, loco_split, run_fold, wasserstein_distance)
from .exceptions import (ConditioningError, ConfigError, DegenerateDirectionError,
                         DegenerateLabelError, EmptyBandError, InputValidationError,
                         RankDeficiencyWarning, SpectralRangeError, TonalDiPLSError)
from .model import (DiPLSRegressor, PLSRegressor, center_domains, covariance_gap, dipls_objective,
                    dipls_weight, pls_weight)
from .spectral import (Channel, FeatureRow, SpectralFrame, band_rms, extract_features,
                       label_from_mics, level_db, to_db)
from .synthbench import (ConditionSpec, SuiteSpec, default_suite, generate_condition,
                         generate_suite, render_waveforms)

__all__ = [
    "DomainDataset", "concatenate", "read_dataset", "read_manifest", "write_dataset",
    "EvaluationReport", "FoldResult", "MetricRecord", "aggregate", "compute_metrics", "evaluate",
    "loco_split", "run_fold", "wasserstein_distance",
    "ConditioningError", "ConfigError", "DegenerateDirectionError", "DegenerateLabelError",
    "EmptyBandError", "InputValidationError", "RankDeficiencyWarning", "SpectralRangeError",
    "TonalDiPLSError",
    "DiPLSRegressor", "PLSRegressor", "center_domains", "covariance_gap", "dipls_objective",
    "dipls_weight", "pls_weight",
    "Channel", "FeatureRow", "SpectralFrame", "band_rms", "extract_features", "label_from_mics",
    "level_db", "to_db",
    "ConditionSpec", "SuiteSpec", "default_suite", "generate_condition", "generate_suite",
    "render_waveforms",
]
