"""Paired longitude/latitude predictors and the dead-reckoning baseline.

Every predictor maps the raw feature matrix of a `Dataset` (``speed, lon,
lat, course`` per report, anchor report last) to ``[lon, lat]`` one
prediction interval ahead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted

from ..dataset import POINT_FEATURES, WINDOW, Dataset
from ..geo import DEFAULT_EARTH, EarthModel, GeoPoint, dead_reckon, dead_reckon_array, normalize_lon, \
    normalize_lon_array
from .base import ContractError
from .forest import RandomForestRegressor
from .linear import LinearRegressor
from .mlp import MLPRegressor

KINDS = ("linear", "mlp", "forest", "kinematic", "window-mlp")
TARGET_COLUMN = {"lon": 0, "lat": 1}


def _target_column(target: str) -> int:
    try:
        return TARGET_COLUMN[target.lower()]
    except KeyError:
        raise ContractError(f"target must be 'lon' or 'lat', got {target!r}") from None


def _clip_lat(lat):
    return np.clip(lat, -90.0, 90.0)


class KinematicPredictor(RegressorMixin, BaseEstimator):
    """Constant speed and course projection over a fixed interval. Nothing to learn."""

    kind = "kinematic"

    def __init__(self, interval_min: float = 10.0, earth_radius_km: float = DEFAULT_EARTH.radius_km):
        self.interval_min = interval_min
        self.earth_radius_km = earth_radius_km

    @property
    def label(self) -> str:
        return "kinematic"

    def fit(self, X=None, y=None):
        self.n_train_ = 0
        return self

    def predict(self, X) -> np.ndarray:
        X = check_array(X, dtype=float)
        anchor = X[:, -4:]
        lat, lon = dead_reckon_array(anchor[:, 2], anchor[:, 1], anchor[:, 0], anchor[:, 3],
                                     self.interval_min, EarthModel(self.earth_radius_km))
        return np.column_stack([lon, lat])

    def predict_point(self, speed, lon, lat, course) -> GeoPoint:
        return dead_reckon(GeoPoint(lat, lon), speed, course, self.interval_min, EarthModel(self.earth_radius_km))


class PositionPredictor(RegressorMixin, BaseEstimator):
    """Two clones of `estimator`, one per output coordinate.

    Parameters
    ----------
    estimator : sklearn-style regressor
        Template fitted once for longitude and once for latitude.
    interval_min : float
        Prediction horizon the predictor was trained for.
    features : sequence of str or None
        Subset of ``speed, lon, lat, course`` used by point predictors;
        None uses all four. Ignored for window predictors.
    window : int
        0 for point predictors, otherwise the number of stacked reports.
    target_mode : {"offset", "absolute"}
        "offset" learns the displacement from the anchor report and adds it
        back at prediction time; "absolute" learns the next coordinates.
    """

    def __init__(self, estimator=None, interval_min: float = 10.0, features: Optional[Sequence[str]] = None,
                 window: int = 0, target_mode: str = "offset"):
        self.estimator = estimator
        self.interval_min = interval_min
        self.features = features
        self.window = window
        self.target_mode = target_mode

    @property
    def kind(self) -> str:
        est = self.estimator
        if isinstance(est, MLPRegressor):
            return "window-mlp" if self.window else "mlp"
        if isinstance(est, LinearRegressor):
            return "linear"
        if isinstance(est, RandomForestRegressor):
            return "forest"
        return type(est).__name__.lower()

    @property
    def label(self) -> str:
        est = self.estimator
        if isinstance(est, MLPRegressor):
            sizes = "-".join(str(h) for h in est.hidden_layer_sizes) or "linear"
            return f"{'window-' if self.window else ''}mlp-{sizes}"
        if isinstance(est, RandomForestRegressor):
            return f"forest-{est.n_trees}"
        if self.features is not None and tuple(self.features) != POINT_FEATURES:
            return f"{self.kind}[{','.join(self.features)}]"
        return self.kind

    def _columns(self, n_cols: int) -> np.ndarray:
        expected = 4 * (self.window or 1)
        if n_cols != expected:
            raise ContractError(f"expected {expected} feature columns, got {n_cols}")
        if self.window or self.features is None:
            return np.arange(n_cols)
        unknown = set(self.features) - set(POINT_FEATURES)
        if unknown:
            raise ContractError(f"unknown features {sorted(unknown)}")
        return np.array([POINT_FEATURES.index(f) for f in self.features])

    def _encode_targets(self, X, Y):
        if self.target_mode == "absolute":
            return Y[:, 0], Y[:, 1]
        if self.target_mode != "offset":
            raise ContractError(f"unknown target mode {self.target_mode!r}")
        return normalize_lon_array(Y[:, 0] - X[:, -3]), Y[:, 1] - X[:, -2]

    def fit(self, X, Y):
        if self.estimator is None:
            raise ContractError("PositionPredictor needs an estimator")
        X = check_array(X, dtype=float)
        Y = check_array(Y, dtype=float)
        if Y.shape != (len(X), 2):
            raise ContractError(f"targets must have shape (n, 2), got {Y.shape}")
        cols = self._columns(X.shape[1])
        t_lon, t_lat = self._encode_targets(X, Y)
        self.columns_ = cols
        self.lon_model_ = clone(self.estimator).fit(X[:, cols], t_lon)
        self.lat_model_ = clone(self.estimator).fit(X[:, cols], t_lat)
        self.n_train_ = len(X)
        return self

    def fit_dataset(self, d: Dataset) -> "PositionPredictor":
        if d.interval_min != self.interval_min:
            raise ContractError(f"dataset interval {d.interval_min} != predictor interval {self.interval_min}")
        return self.fit(d.X, d.y)

    def _decode(self, X, lon, lat):
        if self.target_mode == "offset":
            lon = lon + X[:, -3]
            lat = lat + X[:, -2]
        return np.column_stack([normalize_lon_array(lon), _clip_lat(lat)])

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "lon_model_")
        X = check_array(X, dtype=float)
        self._columns(X.shape[1])
        Xc = X[:, self.columns_]
        return self._decode(X, self.lon_model_.predict(Xc), self.lat_model_.predict(Xc))

    def predict_point(self, speed, lon, lat, course) -> GeoPoint:
        if self.window:
            raise ContractError("window predictors need a full report window")
        check_is_fitted(self, "lon_model_")
        x = np.array([speed, lon, lat, course], dtype=float)
        xc = x[self.columns_]
        out_lon = self.lon_model_.predict_row(xc)
        out_lat = self.lat_model_.predict_row(xc)
        if self.target_mode == "offset":
            out_lon += lon
            out_lat += lat
        return GeoPoint(min(max(out_lat, -90.0), 90.0), normalize_lon(out_lon))


def predict_position(p, speed: float, lon: float, lat: float, course: float) -> GeoPoint:
    """Forecast one report's position `p.interval_min` minutes ahead."""
    for v in (speed, lon, lat, course):
        if not np.isfinite(v):
            raise ContractError(f"non-finite feature {v!r}")
    if isinstance(p, PositionPredictor) and not hasattr(p, "lon_model_"):
        raise ContractError("untrained predictor")
    return p.predict_point(speed, lon, lat, course)


def predict_window(p: PositionPredictor, window) -> GeoPoint:
    """Forecast from a window of consecutive ``(speed, lon, lat, course)`` reports, oldest first."""
    w = np.asarray(window, dtype=float)
    if not p.window:
        raise ContractError("predictor is not a window model")
    if w.shape != (p.window, 4):
        raise ContractError(f"window must have shape ({p.window}, 4), got {w.shape}")
    out = p.predict(w.reshape(1, -1))[0]
    return GeoPoint(float(out[1]), float(out[0]))


# Functional fits on one coordinate, absolute target.
def fit_linear(train: Dataset, target: str) -> LinearRegressor:
    return LinearRegressor().fit(train.X, train.y[:, _target_column(target)])


def fit_mlp(train: Dataset, target: str, hidden=(10,), learning_rate=0.3, momentum=0.2, epochs=500,
            seed=0) -> MLPRegressor:
    model = MLPRegressor(hidden_layer_sizes=tuple(hidden), learning_rate=learning_rate, momentum=momentum,
                         epochs=epochs, seed=seed)
    return model.fit(train.X, train.y[:, _target_column(target)])


def fit_forest(train: Dataset, target: str, n_trees=100, max_features="third", seed=0) -> RandomForestRegressor:
    model = RandomForestRegressor(n_trees=n_trees, max_features=max_features, seed=seed)
    return model.fit(train.X, train.y[:, _target_column(target)])


@dataclass(frozen=True)
class ModelSpec:
    """One row of the model grid: an algorithm with its hyperparameters."""

    id: str
    algorithm: str
    params: dict = field(default_factory=dict)
    features: Optional[tuple[str, ...]] = None
    target_mode: str = "offset"

    def __post_init__(self):
        if self.algorithm not in KINDS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {KINDS}")
        if self.features is not None:
            object.__setattr__(self, "features", tuple(self.features))

    @property
    def is_window(self) -> bool:
        return self.algorithm == "window-mlp"

    def estimator(self):
        p = dict(self.params)
        if self.algorithm == "linear":
            return LinearRegressor(**p)
        if self.algorithm in ("mlp", "window-mlp"):
            p.pop("window", None)
            if "hidden" in p:
                p["hidden_layer_sizes"] = tuple(p.pop("hidden"))
            elif "hidden_layer_sizes" in p:
                p["hidden_layer_sizes"] = tuple(p["hidden_layer_sizes"])
            return MLPRegressor(**p)
        if self.algorithm == "forest":
            return RandomForestRegressor(**p)
        raise ValueError("kinematic predictors carry no estimator")

    def build(self, interval_min: float, earth: EarthModel = DEFAULT_EARTH):
        if self.algorithm == "kinematic":
            return KinematicPredictor(interval_min, earth.radius_km)
        window = int(self.params.get("window", WINDOW)) if self.is_window else 0
        return PositionPredictor(self.estimator(), interval_min, None if window else self.features, window,
                                 self.target_mode)


def reference_grid(epochs: int = 500, seed: int = 0) -> list[ModelSpec]:
    """Default five-model grid: linear on position only, MLPs of three shapes and a 100-tree forest."""
    mlp = {"learning_rate": 0.3, "momentum": 0.2, "epochs": epochs, "seed": seed}
    return [
        ModelSpec("1", "linear", {}, ("lon", "lat")),
        ModelSpec("2", "mlp", {"hidden": [10], **mlp}),
        ModelSpec("3", "forest", {"n_trees": 100, "seed": seed}),
        ModelSpec("4", "mlp", {"hidden": [3], **mlp}),
        ModelSpec("5", "mlp", {"hidden": [10, 10], **mlp}),
    ]
