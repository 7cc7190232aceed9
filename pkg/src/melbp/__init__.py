"""Spatiotemporal binary-pattern features for micro-expression recognition.

The package covers the full chain: three complementary binary codes
(center-, angular-, and radial-difference) scanned over the XY/XT/YT planes
of a video volume, block-pooled normalized histograms, whitened-PCA
embedding, feature fusion, and leave-one-subject-out evaluation with nested
penalty selection, plus motion magnification and temporal resampling for
clip conditioning.
"""

from .codes import (
    EncodingScheme,
    NeighborSpec,
    adlbp_code,
    build_encoding_table,
    lbp_code,
    rdlbp_code,
    sample_ring,
)
from .classify import (
    DEFAULT_C_GRID,
    EvalReport,
    LabeledFeature,
    LinearSvmModel,
    MetricBundle,
    composite_evaluate,
    compute_metrics,
    loso_evaluate,
    train_linear_svm,
)
from .embed import WpcaModel, wpca_fit, wpca_transform
from .errors import (
    BorderViolationError,
    ConfigurationError,
    DegenerateDataError,
    IngestionError,
    MelbpError,
    PreprocessingError,
    ProtocolError,
    ShapeError,
)
from .manifest import DatasetManifest, ManifestEntry, ingest, load_clip, load_manifest, save_manifest
from .pipeline import (
    PRESETS,
    RunConfig,
    SchemeResult,
    WpcaSettings,
    compute_feature_matrices,
    fusion_search,
    run_pipeline,
)
from .preprocess import EvmParams, TimParams, magnify, tim_interpolate, to_gray_resize
from .synth import render_clip, synth_generate
from .volume import (
    BlockGrid,
    DescriptorConfig,
    DescriptorHistogram,
    PlaneSet,
    VideoVolume,
    extract_descriptor,
    fuse_concat,
    slice_planes,
)

__version__ = "0.1.0"

__all__ = [
    "BlockGrid",
    "BorderViolationError",
    "ConfigurationError",
    "DEFAULT_C_GRID",
    "DatasetManifest",
    "DegenerateDataError",
    "DescriptorConfig",
    "DescriptorHistogram",
    "EncodingScheme",
    "EvalReport",
    "EvmParams",
    "IngestionError",
    "LabeledFeature",
    "LinearSvmModel",
    "ManifestEntry",
    "MelbpError",
    "MetricBundle",
    "NeighborSpec",
    "PRESETS",
    "PlaneSet",
    "PreprocessingError",
    "ProtocolError",
    "RunConfig",
    "SchemeResult",
    "ShapeError",
    "TimParams",
    "VideoVolume",
    "WpcaModel",
    "WpcaSettings",
    "adlbp_code",
    "build_encoding_table",
    "composite_evaluate",
    "compute_feature_matrices",
    "compute_metrics",
    "extract_descriptor",
    "fuse_concat",
    "fusion_search",
    "ingest",
    "lbp_code",
    "load_clip",
    "load_manifest",
    "loso_evaluate",
    "magnify",
    "rdlbp_code",
    "render_clip",
    "run_pipeline",
    "sample_ring",
    "save_manifest",
    "slice_planes",
    "synth_generate",
    "tim_interpolate",
    "to_gray_resize",
    "train_linear_svm",
    "wpca_fit",
    "wpca_transform",
]
