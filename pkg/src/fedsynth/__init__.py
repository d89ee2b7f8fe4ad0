"""Federated training of tabular GANs with similarity-weighted aggregation.

The package splits into data handling (loading, typed tables, partition
scenarios), shared encoders built from privacy-preserving statistics,
divergence-based client weighting, a small float64 neural network stack,
the GAN itself, the federation protocol with its wire format, and
evaluation plus reporting utilities. The ``fedsynth`` command line drives
end-to-end scenario runs.
"""
from .data import (
    ColumnKind,
    ColumnMeta,
    DataError,
    EmptyTableError,
    ScenarioKind,
    ScenarioSpec,
    Table,
    load_csv,
    partition,
)
from .encoders import (
    CategoricalStats,
    EncodedLayout,
    EncodingError,
    GmmParams,
    LabelEncoder,
    aggregate_categorical,
    aggregate_gmm,
    build_layout,
    decode_rows,
    encode_table,
    fit_gmm,
    local_categorical_stats,
    sample_gmm,
)
from .evaluation import (
    MetricsLog,
    MinMaxNormalizer,
    SimilarityScore,
    avg_jsd,
    avg_wd,
    similarity_score,
)
from .federation import (
    CentralizedRun,
    ClientWorker,
    FederationConfig,
    Federator,
    RoundRecord,
    run_client,
)
from .gan import GanConfig, GanModel, build_gan, sample_synthetic, train_local
from .seeding import derive_seed, derived_rng
from .similarity import (
    DivergenceMatrix,
    WeightTrace,
    client_weights,
    divergence_matrix,
    jsd,
    uniform_weights,
    wd_empirical,
)

__version__ = "0.1.0"

__all__ = [
    "CategoricalStats",
    "CentralizedRun",
    "ClientWorker",
    "ColumnKind",
    "ColumnMeta",
    "DataError",
    "DivergenceMatrix",
    "EmptyTableError",
    "EncodedLayout",
    "EncodingError",
    "FederationConfig",
    "Federator",
    "GanConfig",
    "GanModel",
    "GmmParams",
    "LabelEncoder",
    "MetricsLog",
    "MinMaxNormalizer",
    "RoundRecord",
    "ScenarioKind",
    "ScenarioSpec",
    "SimilarityScore",
    "Table",
    "WeightTrace",
    "aggregate_categorical",
    "aggregate_gmm",
    "avg_jsd",
    "avg_wd",
    "build_gan",
    "build_layout",
    "client_weights",
    "decode_rows",
    "derive_seed",
    "derived_rng",
    "divergence_matrix",
    "encode_table",
    "fit_gmm",
    "jsd",
    "load_csv",
    "local_categorical_stats",
    "partition",
    "run_client",
    "sample_gmm",
    "sample_synthetic",
    "similarity_score",
    "train_local",
    "uniform_weights",
    "wd_empirical",
]
