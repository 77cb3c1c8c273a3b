"""Unsupervised abnormal-event detection in attributed heterogeneous networks.

Events are star-schema instances (a center node plus typed context nodes)
treated as hyperedges.  Three contrastive signals are trained jointly: node
pairs within an event against sampled outsiders, the center against its
(possibly corrupted) context set, and each event against its metapath
neighbors.  Anomaly scores negate the learned normality signals.

Typical flow: generate or load an EventDataset, inject labeled anomalies,
train, then score_events and evaluate with average_precision / roc_auc.
"""

from .data import (
    Ahin,
    DatasetError,
    Event,
    EventDataset,
    NodeType,
    load_dataset,
    load_dataset_dir,
    metapath_count,
    save_dataset,
    shared_node_count,
)
from .detection import (
    ScoreReport,
    ScoreVariant,
    average_precision,
    detect,
    detect_top_fraction,
    event_score,
    f1_optimal_threshold,
    read_scores,
    roc_auc,
    score_events,
    write_scores,
)
from .encoder import encode_all, init_params, transform_node, type_aware
from .injection import (
    InjectionConfig,
    InjectionResult,
    SynthConfig,
    generate_synthetic,
    inject_anomalies,
    synth_preset,
)
from .inter_event import (
    NeighborSets,
    build_neighbor_sets,
    event_representation,
    inter_event_loss,
    inter_event_score,
    load_neighbor_sets,
)
from .intra_event import (
    CorruptedContext,
    PairwiseBatchPlan,
    corrupt_context,
    multivariate_context,
    multivariate_loss,
    multivariate_score,
    pairwise_loss,
    pairwise_loss_node,
    sample_pairwise_plan,
)
from .numerics import (
    ParameterStore,
    cosine_similarity,
    grad_check,
    kmeans,
    sigmoid,
    softmax,
)
from .training import (
    WEIGHT_PRESETS,
    TrainConfig,
    TrainReport,
    load_config,
    save_config,
    total_loss,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Ahin", "DatasetError", "Event", "EventDataset", "NodeType",
    "load_dataset", "load_dataset_dir", "save_dataset",
    "metapath_count", "shared_node_count",
    "ScoreReport", "ScoreVariant", "average_precision", "roc_auc",
    "detect", "detect_top_fraction", "event_score", "f1_optimal_threshold",
    "score_events", "read_scores", "write_scores",
    "encode_all", "init_params", "transform_node", "type_aware",
    "InjectionConfig", "InjectionResult", "SynthConfig",
    "generate_synthetic", "inject_anomalies", "synth_preset",
    "NeighborSets", "build_neighbor_sets", "load_neighbor_sets",
    "event_representation", "inter_event_loss", "inter_event_score",
    "CorruptedContext", "PairwiseBatchPlan", "corrupt_context",
    "multivariate_context", "multivariate_loss", "multivariate_score",
    "pairwise_loss", "pairwise_loss_node", "sample_pairwise_plan",
    "ParameterStore", "cosine_similarity", "grad_check", "kmeans",
    "sigmoid", "softmax",
    "WEIGHT_PRESETS", "TrainConfig", "TrainReport",
    "load_config", "save_config", "total_loss", "train",
    "__version__",
]
