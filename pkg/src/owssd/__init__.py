"""Open-world semi-supervised detection support library.

Core pieces: box geometry and NMS, a numpy MLP autoencoder, a
per-class autoencoder ensemble for out-of-distribution detection with
threshold calibration, reference OOD scorers (k-nearest-neighbor
distance, pooled autoencoder), pseudo-label fusion, open-world
detection metrics, and deterministic file formats tying them together.
"""

__version__ = "0.1.0"

from .core import (
    UNKNOWN_LABEL,
    BoundingBox,
    ClassCatalog,
    Detection,
    GroundTruthScene,
    ScoredBox,
    group_by_image,
    iou,
    nms,
)
from .errors import (
    CalibrationError,
    DimensionError,
    InputError,
    InvalidBoxError,
    OwssdError,
    SchemaError,
    TrainingError,
)
from .nnet import (
    AeArchitecture,
    MlpAutoencoder,
    TrainConfig,
    auto_architecture,
    gradient_check,
    init_autoencoder,
    load_model,
    reconstruct,
    reconstruction_error,
    reconstruction_errors,
    save_model,
    train,
)
from .ensemble import (
    DEFAULT_MU,
    CalibrationReport,
    EnsembleModel,
    OodVerdict,
    calibrate_threshold,
    classify_feature,
    classify_proposals,
    default_mu_candidates,
    derive_member_seed,
    load_ensemble,
    ood_score,
    save_ensemble,
    split_for_calibration,
    sweep_thresholds,
    train_ensemble,
)
from .baselines import (
    CommonAeScorer,
    EnsembleScorer,
    KnnScorer,
    OodScorer,
    ScorerCalibration,
    calibrate_scorer_threshold,
    fit_common_ae,
    fit_knn,
    knn_score,
    load_knn,
    save_knn,
)
from .fusion import (
    FusionConfig,
    PseudoLabelSet,
    emit_training_set,
    fuse,
    fuse_images,
    pseudo_labels_as_detections,
    select_teacher_pseudolabels,
)
from .metrics import (
    BinaryOodEval,
    EvalReport,
    GroupMeans,
    auroc,
    average_recall,
    binary_ood_eval,
    evaluate_detections,
    voc_ap50,
)
from .dataio import (
    AnnotationSet,
    FeatureRecord,
    FeatureSet,
    ImageInfo,
    SyntheticBundle,
    SyntheticConfig,
    filter_proposals,
    generate_synthetic,
    load_annotations,
    load_detections,
    load_features,
    load_proposals,
    oracle_proposals,
    write_annotations,
    write_bundle,
    write_detections,
    write_features,
    write_proposals,
)
