"""Crowd counting over dense per-pixel attribute maps.

The pipeline pools an attribute probability map over a cell grid into
locality-aware descriptors, projects them with PCA+whitening, encodes them
against a k-means dictionary as (weighted) residual vectors and regresses
the crowd count from the encoding. Holistic and whole-frame spatial-pyramid
baselines share the same machinery.
"""

from .attribute_map import (
    AttributeMap,
    RoiMask,
    SceneSpec,
    apply_roi,
    default_palette,
    load_map,
    load_roi_mask,
    render_argmax,
    store_map,
    store_roi_mask,
    synth_scene,
)
from .codebook import (
    Codebook,
    WhiteningTransform,
    fit_codebook,
    fit_whitening,
    project,
    squared_distances,
)
from .encoder import (
    AssignmentWeights,
    Encoding,
    assign_hard,
    encode,
    load_encoding,
    normalize_encoding,
    similarity,
    soft_assignments,
    store_encoding,
)
from .features import (
    DescriptorSet,
    GridSpec,
    extract_descriptors,
    holistic_feature,
    load_descriptors,
    pooled_sums,
    pyramid_feature,
    store_descriptors,
)
from .pipeline import (
    BaselineComparison,
    DatasetManifest,
    FrameEntry,
    ModelBundle,
    PipelineConfig,
    PredictionRow,
    compare_baselines,
    evaluate,
    frame_encoding,
    frame_vector,
    load_bundle,
    load_manifest,
    resolve_beta,
    resolve_lambda,
    save_bundle,
    synth_dataset,
    train,
    write_manifest,
    write_predictions_csv,
)
from .regression import (
    KernelRidgeModel,
    MetricsReport,
    RegressionModel,
    fit_kernel_ridge,
    fit_regressor,
    predict,
    predict_kernel,
    rounded_count,
    score,
)

__version__ = "0.1.0"
