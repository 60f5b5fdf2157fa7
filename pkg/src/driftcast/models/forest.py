"""Regression trees (CART, squared-error splits) and a bagged random forest."""

from __future__ import annotations

import math

import numba
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .base import ContractError, decode_array, encode_array

LEAF = -1


@numba.njit(cache=True, nogil=True)
def _build_tree(X, y, sample_idx, max_features, min_samples_split, randomize, seed):
    n_features = X.shape[1]
    n = sample_idx.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    idx = sample_idx.copy()
    if randomize:
        np.random.seed(seed)
    perm = np.arange(n_features)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0], stack_lo[0], stack_hi[0] = 0, 0, n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node, lo, hi = stack_node[top], stack_lo[top], stack_hi[top]
        m = hi - lo
        mean = 0.0
        for k in range(lo, hi):
            mean += y[idx[k]]
        mean /= m
        value[node] = mean
        pure = True
        first = y[idx[lo]]
        for k in range(lo + 1, hi):
            if y[idx[k]] != first:
                pure = False
                break
        if m < min_samples_split or pure:
            continue

        yc = np.empty(m)
        for k in range(m):
            yc[k] = y[idx[lo + k]] - mean
        total = 0.0
        for k in range(m):
            total += yc[k]

        if randomize:
            for i in range(n_features):
                j = i + np.random.randint(0, n_features - i)
                perm[i], perm[j] = perm[j], perm[i]
        else:
            for i in range(n_features):
                perm[i] = i

        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        visited = 0
        vals = np.empty(m)
        for fi in range(n_features):
            if visited >= max_features:
                break
            f = perm[fi]
            for k in range(m):
                vals[k] = X[idx[lo + k], f]
            order = np.argsort(vals, kind="mergesort")
            if vals[order[0]] == vals[order[m - 1]]:
                continue  # constant features do not count towards max_features
            visited += 1
            s_left = 0.0
            for k in range(1, m):
                s_left += yc[order[k - 1]]
                v_prev = vals[order[k - 1]]
                v_next = vals[order[k]]
                if v_prev == v_next:
                    continue
                s_right = total - s_left
                score = s_left * s_left / k + s_right * s_right / (m - k)
                # candidates equal up to rounding keep the earliest (feature, threshold)
                if best_f < 0 or score > best_score + 1e-12 * abs(best_score):
                    best_score = score
                    best_f = f
                    thr = 0.5 * (v_prev + v_next)
                    if thr >= v_next:
                        thr = v_prev
                    best_thr = thr
        if best_f < 0:
            continue

        # partition idx[lo:hi] around the threshold, stable within each side
        tmp = idx[lo:hi].copy()
        n_left = 0
        for k in range(m):
            if X[tmp[k], best_f] <= best_thr:
                idx[lo + n_left] = tmp[k]
                n_left += 1
        pos = lo + n_left
        for k in range(m):
            if X[tmp[k], best_f] > best_thr:
                idx[pos] = tmp[k]
                pos += 1

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is numbered/processed first
        stack_node[top], stack_lo[top], stack_hi[top] = n_nodes + 1, lo + n_left, hi
        top += 1
        stack_node[top], stack_lo[top], stack_hi[top] = n_nodes, lo, lo + n_left
        top += 1
        n_nodes += 2
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


class RegressionTree:
    """A fitted CART tree in flat-array form (node 0 is the root, ``feature == -1`` marks leaves)."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value

    @classmethod
    def fit(cls, X, y, sample_idx=None, max_features=None, min_samples_split=2, randomize=False, seed=0):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        if sample_idx is None:
            sample_idx = np.arange(len(y), dtype=np.int64)
        mf = X.shape[1] if max_features is None else int(max_features)
        return cls(*_build_tree(X, y, np.asarray(sample_idx, dtype=np.int64), mf, int(min_samples_split),
                                bool(randomize), int(seed)))

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X) -> np.ndarray:
        return _predict_tree(self.feature, self.threshold, self.left, self.right, self.value,
                             np.ascontiguousarray(X, dtype=float))

    def get_state(self) -> dict:
        return {name: encode_array(getattr(self, name)) for name in self.__slots__}

    @classmethod
    def from_state(cls, state: dict) -> "RegressionTree":
        return cls(*(decode_array(state[name]) for name in cls.__slots__))


def resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None:
        return n_features
    if max_features == "third":
        return max(1, math.ceil(n_features / 3))
    k = int(max_features)
    if not 1 <= k <= n_features:
        raise ContractError(f"max_features must be in [1, {n_features}], got {k}")
    return k


class RandomForestRegressor(RegressorMixin, BaseEstimator):
    """Bagged CART trees with per-node feature subsampling; predicts the tree mean.

    ``max_features="third"`` samples ``ceil(d / 3)`` candidate features per
    node. With ``bootstrap=False`` and ``max_features=None`` every tree is
    the same deterministic CART tree.
    """

    def __init__(self, n_trees=100, max_features="third", min_samples_split=2, bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        n, d = X.shape
        if n < 2:
            raise ContractError(f"forest needs at least 2 instances, got {n}")
        if self.n_trees < 1:
            raise ContractError("n_trees must be at least 1")
        mf = resolve_max_features(self.max_features, d)
        randomize = mf < d
        X = np.ascontiguousarray(X)
        y = np.ascontiguousarray(y)
        self.trees_ = []
        self.tree_seeds_ = []
        for child in np.random.SeedSequence(self.seed).spawn(int(self.n_trees)):
            rng = np.random.default_rng(child)
            sample = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            tree_seed = int(rng.integers(0, 2**31 - 1))
            self.tree_seeds_.append(tree_seed)
            self.trees_.append(RegressionTree.fit(X, y, sample, mf, self.min_samples_split, randomize, tree_seed))
        self.n_features_in_ = d
        self.max_features_ = mf
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ContractError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        total = np.zeros(len(X))
        for tree in self.trees_:
            total += tree.predict(X)
        return total / len(self.trees_)

    def predict_row(self, x: np.ndarray) -> float:
        return float(self.predict(x.reshape(1, -1))[0])

    def get_state(self) -> dict:
        check_is_fitted(self, "trees_")
        return {
            "params": self.get_params(),
            "n_features": self.n_features_in_,
            "max_features_resolved": self.max_features_,
            "tree_seeds": list(self.tree_seeds_),
            "trees": [t.get_state() for t in self.trees_],
        }

    @classmethod
    def from_state(cls, state: dict) -> "RandomForestRegressor":
        m = cls(**state["params"])
        m.trees_ = [RegressionTree.from_state(t) for t in state["trees"]]
        m.tree_seeds_ = list(state["tree_seeds"])
        m.n_features_in_ = state["n_features"]
        m.max_features_ = state["max_features_resolved"]
        return m
