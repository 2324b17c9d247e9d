"""Glass-box survival analysis with discretized, kernel-smoothed additive
models predicting the cumulative incidence function at a grid of times.
"""

from .binning import BinSpec, apply_bins, fit_bins, fit_levels
from .data import ColumnSchema, SplitIndices, SurvivalDataset, load_csv, save_csv, split
from .embedding import EmbeddingTable, embed_feature, embed_pair, kernel_weights
from .interpret import ShapeCurve, feature_importance, shape_function
from .metrics import brier_ipcw, c_index, calibration_curve, shape_mae, td_auc
from .model import Contribution, DnamiteModel, ShapeNet, loss_and_gradients
from .persist import ModelFormatError, load_model, save_model
from .survstats import StepCurve, censor_curve, ipcw_loss, km_fit
from .synthetic import SyntheticSpec, generate, true_feature_fn, true_interaction_fn
from .train import (
    Adam,
    EnsembleModel,
    TrainConfig,
    center_model,
    fit_ensemble,
    fit_interactions,
    fit_main_effects,
    select_pairs,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "BinSpec",
    "ColumnSchema",
    "Contribution",
    "DnamiteModel",
    "EmbeddingTable",
    "EnsembleModel",
    "ModelFormatError",
    "ShapeCurve",
    "ShapeNet",
    "SplitIndices",
    "StepCurve",
    "SurvivalDataset",
    "SyntheticSpec",
    "TrainConfig",
    "apply_bins",
    "brier_ipcw",
    "c_index",
    "calibration_curve",
    "censor_curve",
    "center_model",
    "embed_feature",
    "embed_pair",
    "feature_importance",
    "fit_bins",
    "fit_ensemble",
    "fit_interactions",
    "fit_levels",
    "fit_main_effects",
    "generate",
    "ipcw_loss",
    "kernel_weights",
    "km_fit",
    "load_csv",
    "load_model",
    "loss_and_gradients",
    "save_csv",
    "save_model",
    "select_pairs",
    "shape_function",
    "shape_mae",
    "split",
    "td_auc",
    "true_feature_fn",
    "true_interaction_fn",
]
