"""Ordinary least squares with intercept, solved by pivoted QR."""

from __future__ import annotations

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .base import ContractError, ModelError, decode_array, encode_array

RIDGE_LAMBDA = 1e-8


class SingularFitError(ModelError):
    pass


def _numerical_rank(R: np.ndarray, shape: tuple[int, int]) -> int:
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    tol = max(shape) * np.finfo(float).eps * diag[0]
    return int(np.sum(diag > tol))


def solve_least_squares(A: np.ndarray, b: np.ndarray, ridge: float = RIDGE_LAMBDA) -> tuple[np.ndarray, bool]:
    """Minimise ``||A w - b||`` by column-pivoted QR.

    Columns are scaled to unit norm before factorising so the rank test is
    scale free. When `A` is rank deficient the problem is re-solved with a
    ridge penalty on every column but the last (the intercept) by stacking
    ``sqrt(ridge) * I`` under the scaled design. Returns ``(w, ridged)``.
    """
    m, n = A.shape
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0.0] = 1.0
    As = A / norms
    Q, R, piv = scipy.linalg.qr(As, mode="economic", pivoting=True)
    rank = _numerical_rank(R, (m, n))
    if rank == n:
        z = scipy.linalg.solve_triangular(R, Q.T @ b)
        w = np.empty(n)
        w[piv] = z
        return w / norms, False
    if rank <= 1:
        raise SingularFitError(f"design has numerical rank {rank}; nothing to regress on")
    penalty = np.sqrt(ridge) * np.eye(n)[:-1]
    Aug = np.vstack([As, penalty])
    bug = np.concatenate([b, np.zeros(n - 1)])
    Q, R, piv = scipy.linalg.qr(Aug, mode="economic", pivoting=True)
    if _numerical_rank(R, Aug.shape) < n:
        raise SingularFitError("ridge-regularised system is still singular")
    z = scipy.linalg.solve_triangular(R, Q.T @ bug)
    w = np.empty(n)
    w[piv] = z
    return w / norms, True


class LinearRegressor(RegressorMixin, BaseEstimator):
    """Least-squares linear model ``y = X @ coef_ + intercept_``.

    ``weights_`` stores the d + 1 coefficients with the intercept last.
    """

    def __init__(self, ridge: float = RIDGE_LAMBDA):
        self.ridge = ridge

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        n, d = X.shape
        if n < d + 1:
            raise ContractError(f"linear fit needs at least {d + 1} instances, got {n}")
        A = np.hstack([X, np.ones((n, 1))])
        self.weights_, self.ridged_ = solve_least_squares(A, y, self.ridge)
        if not np.all(np.isfinite(self.weights_)):
            raise SingularFitError("non-finite coefficients")
        self.n_features_in_ = d
        return self

    @property
    def coef_(self) -> np.ndarray:
        return self.weights_[:-1]

    @property
    def intercept_(self) -> float:
        return float(self.weights_[-1])

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ContractError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X @ self.weights_[:-1] + self.weights_[-1]

    def predict_row(self, x: np.ndarray) -> float:
        return float(x @ self.weights_[:-1] + self.weights_[-1])

    def get_state(self) -> dict:
        check_is_fitted(self, "weights_")
        return {"ridge": self.ridge, "weights": encode_array(self.weights_), "ridged": bool(self.ridged_)}

    @classmethod
    def from_state(cls, state: dict) -> "LinearRegressor":
        m = cls(ridge=state["ridge"])
        m.weights_ = decode_array(state["weights"])
        m.ridged_ = state["ridged"]
        m.n_features_in_ = len(m.weights_) - 1
        return m
