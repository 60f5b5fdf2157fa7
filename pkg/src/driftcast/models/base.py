"""Shared estimator plumbing: min-max scaling and array (de)serialisation."""

from __future__ import annotations

import base64

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class ModelError(RuntimeError):
    """Base class for model fitting and contract failures."""


class ContractError(ModelError, ValueError):
    """Inputs violate an operation's preconditions (shape, length, fitted state)."""


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {"dtype": a.dtype.str, "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(blob: dict) -> np.ndarray:
    raw = base64.b64decode(blob["data"].encode("ascii"))
    return np.frombuffer(raw, dtype=np.dtype(blob["dtype"])).reshape(blob["shape"]).copy()


class MinMaxFeatureScaler(TransformerMixin, BaseEstimator):
    """Per-column min-max map onto [0, 1].

    Unlike ``sklearn.preprocessing.MinMaxScaler``, a constant column maps to
    0.5 and inverts back to its constant.
    """

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False, dtype=float)
        X2 = X.reshape(len(X), -1)
        self.min_ = X2.min(axis=0)
        self.max_ = X2.max(axis=0)
        self.n_features_in_ = X2.shape[1]
        return self

    def _span(self):
        span = self.max_ - self.min_
        return span, span > 0

    def transform(self, X):
        check_is_fitted(self, "min_")
        X = np.asarray(X, dtype=float)
        span, live = self._span()
        safe = np.where(live, span, 1.0)
        return np.where(live, (X - self.min_) / safe, 0.5)

    def inverse_transform(self, Z):
        check_is_fitted(self, "min_")
        Z = np.asarray(Z, dtype=float)
        span, live = self._span()
        return np.where(live, self.min_ + Z * span, self.min_)

    def get_state(self) -> dict:
        return {"min": encode_array(self.min_), "max": encode_array(self.max_)}

    @classmethod
    def from_state(cls, state: dict) -> "MinMaxFeatureScaler":
        s = cls()
        s.min_ = decode_array(state["min"])
        s.max_ = decode_array(state["max"])
        s.n_features_in_ = len(s.min_)
        return s
