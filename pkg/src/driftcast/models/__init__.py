from .base import ContractError, MinMaxFeatureScaler, ModelError
from .forest import RandomForestRegressor, RegressionTree
from .linear import LinearRegressor, SingularFitError
from .mlp import DivergenceError, MLPRegressor, mlp_gradient
from .predictor import (KinematicPredictor, ModelSpec, PositionPredictor, fit_forest, fit_linear, fit_mlp,
                        predict_position, predict_window, reference_grid)
from .serialization import ModelLoadError, load_model, save_model

__all__ = [
    "ContractError", "DivergenceError", "KinematicPredictor", "LinearRegressor", "MLPRegressor",
    "MinMaxFeatureScaler", "ModelError", "ModelLoadError", "ModelSpec", "PositionPredictor",
    "RandomForestRegressor", "RegressionTree", "SingularFitError", "fit_forest", "fit_linear", "fit_mlp",
    "load_model", "mlp_gradient", "predict_position", "predict_window", "save_model", "reference_grid",
]
