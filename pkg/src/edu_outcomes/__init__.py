"""School-outcome analytics: tabular ingestion, interpretable classifiers, SHAP, association tests."""
from .encode import LabeledDataset, apply_encoding, balance_classes, encode_features
from .errors import ConfigError, DataError, EduOutcomesError, NumericError, StageError
from .evaluation import cross_validate, grid_search, roc_auc, stratified_kfold
from .interpret import odds_ratio_table, shap_oracle, tree_shap, tree_shap_matrix
from .models import fit_forest, fit_gbm, fit_logreg, fit_model, fit_tree, predict_proba
from .pipeline import PipelineConfig, run_pipeline
from .table import LabelRule, SchemaSpec, Table, read_table

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "EduOutcomesError", "LabelRule", "LabeledDataset", "NumericError",
    "PipelineConfig", "SchemaSpec", "StageError", "Table", "apply_encoding", "balance_classes",
    "cross_validate", "encode_features", "fit_forest", "fit_gbm", "fit_logreg", "fit_model", "fit_tree",
    "grid_search", "odds_ratio_table", "predict_proba", "read_table", "roc_auc", "run_pipeline",
    "shap_oracle", "stratified_kfold", "tree_shap", "tree_shap_matrix",
]
