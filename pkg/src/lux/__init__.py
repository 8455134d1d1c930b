"""Local rule-based explanations built on representative real-data neighborhoods."""

__version__ = "0.1.0"

from .blackbox import (BlackBoxModel, FunctionModel, PredictionRecord, confidence_threshold,
                       knn_model, subprocess_model)
from .dataset import Dataset, FeatureSchema, load_csv, toy_blobs, write_csv
from .explain import (ExplainParams, Explainer, ExplanationBundle, explain,
                      extract_counterfactual, extract_factual, render_rule)
from .importance import ImportanceVector, importance_from_file, kernel_shap
from .neighborhood import NeighborhoodParams
from .tree import SplitExpr, TreeParams, build_tree, predict

__all__ = [
    "BlackBoxModel", "Dataset", "ExplainParams", "Explainer", "ExplanationBundle",
    "FeatureSchema", "FunctionModel", "ImportanceVector", "NeighborhoodParams",
    "PredictionRecord", "SplitExpr", "TreeParams", "build_tree", "confidence_threshold",
    "explain", "extract_counterfactual", "extract_factual", "importance_from_file",
    "kernel_shap", "knn_model", "load_csv", "predict", "render_rule", "subprocess_model",
    "toy_blobs", "write_csv",
]
