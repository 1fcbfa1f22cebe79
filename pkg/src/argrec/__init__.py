"""Context-aware recommender with argumentative feature attribution."""

from .data import (
    Catalog,
    Dataset,
    IngestError,
    RatingScale,
    RawInteraction,
    inverse_scale,
    k_core_filter,
    load_catalog,
    load_interactions,
    log_transform_counts,
    scale_rating,
    split_dataset,
)
from .model import (
    Checkpoint,
    EmbeddingSpace,
    MfSpace,
    ModelConfig,
    PredictionBreakdown,
    VARIANTS,
    context_factor_importance,
    contextual_user_embedding,
    feature_rating,
    feature_type_importance,
    init_embeddings,
    load_checkpoint,
    predict,
    predict_mf_baseline,
    save_checkpoint,
)
from .training import (
    Batch,
    EvalReport,
    TrainConfig,
    TrainingDiverged,
    evaluate,
    evaluate_mf,
    gradients,
    loss,
    train,
    train_mf,
)
from .argumentation import (
    AxiomReport,
    Taf,
    build_taf,
    check_feedback_monotonicity,
    check_weak_balance,
    check_weak_monotonicity,
    mute,
    taf_to_json,
)
from .explanation import (
    Explanation,
    FeedbackStore,
    apply_feedback,
    classify_scenario,
    contrastive_explanation,
    template_explanation,
)
from .analysis import (
    ImportanceMatrix,
    KMeansResult,
    cluster_report,
    export_importance,
    importance_csv,
    kmeans,
)

__version__ = "0.1.0"
