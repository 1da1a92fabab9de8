"""Shared-driver reconstruction from ensembles of response time series."""

__version__ = "0.1.0"

from .embedding import EmbeddedSeries, EmbeddingParams, choose_params, embed
from .ensemble import MISSING, DriverSignal, ResponseEnsemble, load_csv, save_csv, zscore
from .errors import (
    InputError,
    NumericalError,
    ShdrError,
    StageError,
)
from .metrics import adjusted_rand, percolation, spearman
from .pipeline import (
    ReconstructOptions,
    Reconstruction,
    baseline_mean,
    baseline_pca,
    benchmark_sweep,
    reconstruct,
)
from .recurrence import INF, ConsensusGraph, consensus, pairwise_distances, sparsify_knn
from .reconstruction import continuous_driver, discrete_driver, exact_labels

__all__ = [
    "__version__",
    "EmbeddedSeries",
    "EmbeddingParams",
    "choose_params",
    "embed",
    "MISSING",
    "DriverSignal",
    "ResponseEnsemble",
    "load_csv",
    "save_csv",
    "zscore",
    "InputError",
    "NumericalError",
    "ShdrError",
    "StageError",
    "adjusted_rand",
    "percolation",
    "spearman",
    "ReconstructOptions",
    "Reconstruction",
    "baseline_mean",
    "baseline_pca",
    "benchmark_sweep",
    "reconstruct",
    "INF",
    "ConsensusGraph",
    "consensus",
    "pairwise_distances",
    "sparsify_knn",
    "continuous_driver",
    "discrete_driver",
    "exact_labels",
]
