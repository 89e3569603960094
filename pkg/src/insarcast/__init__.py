"""Point-based ground-displacement forecasting toolkit.

Sparse displacement CSVs are gridded into dense spatio-temporal tensors,
three forecasters (a CNN-LSTM trained with hand-written reverse-mode
gradients, gradient-boosted trees with early stopping, and an
L1-regularized linear model) predict the next displacement map, and the
tree model's behaviour is explained with exact Shapley attribution. The
``insarcast`` CLI drives the whole pipeline from one JSON config.
"""

from .boosting import GbdtParams, TreeEnsemble, TreeNode, gbdt_predict, gbdt_train
from .cnn_lstm import (
    CnnLstmConfig,
    NeuralParameters,
    TrainingHistory,
    encode_frame,
    forward,
    gradient_check,
    loss_mse,
    train,
)
from .errors import InsarcastError
from .evaluate import (
    BinnedStats,
    MetricsRecord,
    binned_mae,
    binned_residual_boxstats,
    build_report,
    compute_metrics,
    mse,
    r2,
    render_heatmap,
    residuals,
    rmse,
)
from .grid import (
    DisplacementMap,
    GridInterpolator,
    GridSpec,
    SpatioTemporalTensor,
    assemble_tensor,
    build_grid_spec,
    estimate_memory,
    fill_missing,
    interpolate_linear,
)
from .ingest import CsvSchema, PointRecord, PointSet, WindowSelection, parse_csv, write_csv
from .lasso import LassoParams, LinearModel, lasso_predict, lasso_train
from .pipeline import run_pipeline
from .runconfig import RunConfig, from_dict, from_file
from .shapley import (
    ShapReport,
    explain_rows,
    force_decomposition,
    shap_brute_force,
    shap_summary,
    tree_shap,
)
from .synth import BowlConfig, SceneConfig, generate_scene
from .tabular import TabularDataset, split_train_val, tensor_to_table, windowed_table

__version__ = "0.1.0"

__all__ = [
    "BinnedStats", "BowlConfig", "CnnLstmConfig", "CsvSchema",
    "DisplacementMap", "GbdtParams", "GridInterpolator", "GridSpec",
    "InsarcastError", "LassoParams", "LinearModel", "MetricsRecord",
    "NeuralParameters", "PointRecord", "PointSet", "RunConfig",
    "SceneConfig", "ShapReport", "SpatioTemporalTensor", "TabularDataset",
    "TrainingHistory", "TreeEnsemble", "TreeNode", "WindowSelection",
    "assemble_tensor", "binned_mae", "binned_residual_boxstats",
    "build_grid_spec", "build_report", "compute_metrics", "encode_frame",
    "estimate_memory", "explain_rows", "fill_missing", "force_decomposition",
    "forward", "from_dict", "from_file", "gbdt_predict", "gbdt_train",
    "generate_scene", "gradient_check", "interpolate_linear", "lasso_predict",
    "lasso_train", "loss_mse", "mse", "parse_csv", "r2", "render_heatmap",
    "residuals", "rmse", "run_pipeline", "shap_brute_force", "shap_summary",
    "split_train_val", "tensor_to_table", "train", "tree_shap",
    "windowed_table", "write_csv",
]
