"""Taxonomy-driven hierarchical scene classification.

Train one probabilistic classifier per internal node of a semantic tree,
chain the conditional probabilities top-down to score every node, and
evaluate at the leaf level or at any meta-class level, with event-aware
dataset splitting and class balancing built in.
"""

from .classifiers import (
    ClassifierError,
    KnnClassifier,
    SoftmaxClassifier,
    TrainConfig,
    TrainingDiverged,
    train_knn,
    train_softmax,
)
from .dataset import (
    Dataset,
    DatasetError,
    Sample,
    SplitAssignment,
    kfold_by_events,
    load_dataset,
    load_split,
    oversample_balance,
    save_dataset,
    save_split,
    split_by_events,
)
from .fixtures import generate_fixture
from .hierarchy import (
    FlatModel,
    HierarchicalModel,
    HierarchicalPrediction,
    ModelFormatError,
    load_model,
    predict_at_level,
    register_classifier_codec,
    save_model,
    train_flat,
    train_hierarchical,
)
from .metrics import (
    ConfusionMatrix,
    EvaluationReport,
    MetricsError,
    accuracy,
    confusion_matrix,
    evaluate_predictions,
    per_level_report,
    precision_recall_f1,
    silhouette_score,
    weighted_accuracy,
)
from .taxonomy import (
    Taxonomy,
    TaxonomyError,
    TaxonomyNode,
    default_taxonomy,
    load_taxonomy,
    parse_taxonomy,
)

__version__ = "0.1.0"

__all__ = [
    "ClassifierError",
    "ConfusionMatrix",
    "Dataset",
    "DatasetError",
    "EvaluationReport",
    "FlatModel",
    "HierarchicalModel",
    "HierarchicalPrediction",
    "KnnClassifier",
    "MetricsError",
    "ModelFormatError",
    "Sample",
    "SoftmaxClassifier",
    "SplitAssignment",
    "Taxonomy",
    "TaxonomyError",
    "TaxonomyNode",
    "TrainConfig",
    "TrainingDiverged",
    "accuracy",
    "confusion_matrix",
    "default_taxonomy",
    "evaluate_predictions",
    "generate_fixture",
    "kfold_by_events",
    "load_dataset",
    "load_model",
    "load_split",
    "load_taxonomy",
    "oversample_balance",
    "parse_taxonomy",
    "per_level_report",
    "precision_recall_f1",
    "predict_at_level",
    "register_classifier_codec",
    "save_dataset",
    "save_model",
    "save_split",
    "silhouette_score",
    "split_by_events",
    "train_flat",
    "train_hierarchical",
    "train_knn",
    "train_softmax",
    "weighted_accuracy",
]
