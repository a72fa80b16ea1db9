"""Topological feature extraction and classification for grayscale images.

Sublevel cubical persistence turns an 8-bit image into dimension-0 and
dimension-1 persistence diagrams; Betti curves turn the diagrams into
fixed-length count vectors; small dense networks (trained from scratch, in
float64, with seeded counter-based randomness) classify them, optionally
fused with externally computed image embeddings.
"""

__version__ = "0.1.0"

from .betti import (
    BinSpec,
    FeatureDataset,
    betti_curve,
    build_feature_dataset,
    extract_feature_vector,
    jacobi_eigh,
    pca_project,
)
from .cubical import (
    CubicalFiltration,
    PersistenceDiagram,
    build_sublevel_filtration,
    compute_persistence,
    diagrams_to_csv,
    oracle_persistence,
)
from .image_io import (
    DatasetError,
    GrayImage,
    ImageFormatError,
    LabeledSample,
    load_image,
    resize_to,
    scan_dataset,
    write_pgm,
)
from .metrics import (
    MetricsReport,
    confusion_matrix,
    evaluate,
    prf_macro,
    roc_auc_ovr,
)
from .pipeline import (
    FusionModel,
    SplitConfig,
    TdaMlpModel,
    TrainConfig,
    load_embeddings,
    predict,
    split_indices,
    train,
)

__all__ = [
    "BinSpec",
    "CubicalFiltration",
    "DatasetError",
    "FeatureDataset",
    "FusionModel",
    "GrayImage",
    "ImageFormatError",
    "LabeledSample",
    "MetricsReport",
    "PersistenceDiagram",
    "SplitConfig",
    "TdaMlpModel",
    "TrainConfig",
    "betti_curve",
    "build_feature_dataset",
    "build_sublevel_filtration",
    "compute_persistence",
    "confusion_matrix",
    "diagrams_to_csv",
    "evaluate",
    "extract_feature_vector",
    "jacobi_eigh",
    "load_embeddings",
    "load_image",
    "oracle_persistence",
    "pca_project",
    "predict",
    "prf_macro",
    "resize_to",
    "roc_auc_ovr",
    "scan_dataset",
    "split_indices",
    "train",
    "write_pgm",
]
