"""Regression metrics, haversine error summaries, k-fold cross-validation and predictor comparison."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import clone

from .dataset import Dataset, kfold_assign
from .geo import DEFAULT_EARTH, EarthModel, GeoPoint, haversine_km_array
from .models.base import ContractError, ModelError
from .models.predictor import ModelSpec


@dataclass(frozen=True)
class RegressionMetrics:
    """Per-coordinate error summary. Undefined quantities are None."""

    correlation: Optional[float]
    mae: float
    rmse: float
    rae_pct: Optional[float]
    rrse_pct: Optional[float]
    n: int


@dataclass(frozen=True)
class HaversineReport:
    mean_km: float
    median_km: float
    p95_km: float
    n_predictions: int


def regression_metrics(predicted, actual) -> RegressionMetrics:
    p = np.asarray(predicted, dtype=float).ravel()
    a = np.asarray(actual, dtype=float).ravel()
    if len(p) != len(a):
        raise ContractError(f"length mismatch: {len(p)} predictions vs {len(a)} actuals")
    if len(a) == 0:
        raise ContractError("metrics need at least one pair")
    err = p - a
    abs_err = np.abs(err)
    sq_err = err * err
    dev = a - a.mean()
    sum_abs_dev = np.abs(dev).sum()
    sum_sq_dev = (dev * dev).sum()
    pdev = p - p.mean()
    denom = math.sqrt((pdev * pdev).sum() * sum_sq_dev)
    corr = float(np.clip((pdev * dev).sum() / denom, -1.0, 1.0)) if denom > 0 else None
    return RegressionMetrics(
        correlation=corr,
        mae=float(abs_err.mean()),
        rmse=float(math.sqrt(sq_err.mean())),
        rae_pct=float(100.0 * abs_err.sum() / sum_abs_dev) if sum_abs_dev > 0 else None,
        rrse_pct=float(100.0 * math.sqrt(sq_err.sum() / sum_sq_dev)) if sum_sq_dev > 0 else None,
        n=len(a),
    )


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    rank = max(1, math.ceil(q * len(sorted_values)))
    return float(sorted_values[rank - 1])


def summarize_distances(d: np.ndarray) -> HaversineReport:
    d = np.asarray(d, dtype=float)
    if len(d) == 0:
        raise ContractError("no distances to summarise")
    # cumulative sum is a strict left-to-right reduction
    mean = float(np.cumsum(d)[-1]) / len(d)
    return HaversineReport(mean, float(np.median(d)), nearest_rank(np.sort(d), 0.95), len(d))


def _latlon(points) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(points, np.ndarray):
        return points[:, 1], points[:, 0]
    pts = list(points)
    return (np.array([p.lat_deg for p in pts], dtype=float), np.array([p.lon_deg for p in pts], dtype=float))


def haversine_report(predicted: Sequence[GeoPoint], actual: Sequence[GeoPoint],
                     earth: EarthModel = DEFAULT_EARTH) -> HaversineReport:
    """Great-circle error summary.

    Accepts sequences of `GeoPoint` or ``(n, 2)`` arrays of ``[lon, lat]``.
    """
    plat, plon = _latlon(predicted)
    alat, alon = _latlon(actual)
    if len(plat) != len(alat):
        raise ContractError(f"length mismatch: {len(plat)} predictions vs {len(alat)} actuals")
    return summarize_distances(haversine_km_array(plat, plon, alat, alon, earth))


@dataclass
class CrossValidationResult:
    lon: RegressionMetrics
    lat: RegressionMetrics
    mean_train_seconds: float
    folds: np.ndarray
    predictions: np.ndarray


def _make_predictor(model, interval_min: float):
    if isinstance(model, ModelSpec):
        return model.build(interval_min)
    return clone(model)


def cross_validate(d: Dataset, model, k: int = 10, seed: int = 0, workers: int = 1) -> CrossValidationResult:
    """k-fold cross-validation on the whole dataset.

    `model` is a `ModelSpec` or an unfitted predictor (cloned per fold).
    Metrics are computed once over the concatenated held-out predictions,
    which cover every instance exactly once.
    """
    folds = kfold_assign(d, k, seed)

    def run(fold: int):
        train = folds != fold
        predictor = _make_predictor(model, d.interval_min)
        started = time.perf_counter()
        try:
            predictor.fit(d.X[train], d.y[train])
        except ModelError as exc:
            raise ModelError(f"fold {fold}: {exc}") from exc
        elapsed = time.perf_counter() - started
        return predictor.predict(d.X[~train]), elapsed

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(k)))
    else:
        results = [run(f) for f in range(k)]

    predictions = np.empty_like(d.y)
    for fold, (pred, _) in enumerate(results):
        predictions[folds == fold] = pred
    return CrossValidationResult(
        lon=regression_metrics(predictions[:, 0], d.y[:, 0]),
        lat=regression_metrics(predictions[:, 1], d.y[:, 1]),
        mean_train_seconds=float(np.mean([r[1] for r in results])),
        folds=folds,
        predictions=predictions,
    )


COMPARISON_COLUMNS = ("predictor", "interval_min", "n_train", "n_test", "mean_km", "median_km", "p95_km")


@dataclass(frozen=True)
class ComparisonRow:
    predictor: str
    interval_min: float
    n_train: int
    n_test: int
    report: HaversineReport

    def values(self) -> list:
        r = self.report
        return [self.predictor, fmt_interval(self.interval_min), self.n_train, self.n_test,
                f"{r.mean_km:.9f}", f"{r.median_km:.9f}", f"{r.p95_km:.9f}"]


def fmt_interval(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COMPARISON_COLUMNS)
        for row in self.rows:
            writer.writerow(row.values())
        return buf.getvalue()

    def to_text(self) -> str:
        return format_table(COMPARISON_COLUMNS, [row.values() for row in self.rows])


def format_table(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(map(str, columns))] + [[str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def compare_predictors(test: Dataset, predictors: Sequence, earth: EarthModel = DEFAULT_EARTH,
                       window_test: Optional[Dataset] = None) -> ComparisonTable:
    """One haversine row per predictor over the same test instances.

    Window predictors are scored on `window_test`, reported with its own size.
    """
    if len(test) == 0:
        raise ContractError("empty test set")
    rows = []
    for p in predictors:
        data = test
        if getattr(p, "window", 0):
            if window_test is None or len(window_test) == 0:
                raise ContractError(f"{p.label} needs a non-empty window test set")
            data = window_test
        if p.interval_min != data.interval_min and p.kind != "kinematic":
            raise ContractError(f"{p.label} trained for {p.interval_min} min, test set is {data.interval_min} min")
        pred = p.predict(data.X)
        report = summarize_distances(haversine_km_array(pred[:, 1], pred[:, 0], data.y[:, 1], data.y[:, 0], earth))
        rows.append(ComparisonRow(p.label, data.interval_min, int(getattr(p, "n_train_", 0)), len(data), report))
    return ComparisonTable(rows)
