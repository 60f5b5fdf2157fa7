import csv
import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftcast.dataset import Dataset, kfold_assign
from driftcast.eval import (COMPARISON_COLUMNS, compare_predictors, cross_validate, fmt_interval, haversine_report,
                            nearest_rank, regression_metrics, summarize_distances)
from driftcast.geo import GeoPoint, haversine_km
from driftcast.models import ContractError, KinematicPredictor, LinearRegressor, ModelError, PositionPredictor
from oracles import explicit_cv_linear, metrics_by_loop

# frozen from exact rational arithmetic on [1, 2, 3] vs [1, 2, 4]
FIXTURE = dict(mae=0.3333333333333333, rmse=0.5773502691896257, rae_pct=50.0, rrse_pct=70.71067811865476,
               correlation=0.9819805060619656)


def random_dataset(n, seed=0, interval=10):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.uniform(5, 20, n), rng.uniform(24.5, 26.5, n), rng.uniform(36.1, 39.4, n),
                         rng.uniform(0, 360, n)])
    y = np.column_stack([X[:, 1] + 0.01 * X[:, 0] + rng.normal(0, 0.01, n),
                         X[:, 2] - 0.005 * X[:, 0] + rng.normal(0, 0.01, n)])
    t = np.arange(n) * 60
    return Dataset(X, y, np.full(n, 239923000), t, t + interval * 60, interval)


class TestRegressionMetrics:
    def test_hand_fixture(self):
        m = regression_metrics([1, 2, 4], [1, 2, 3])
        for name, value in FIXTURE.items():
            assert abs(getattr(m, name) - value) < 1e-4
        assert m.n == 3

    def test_fixture_matches_exact_arithmetic(self):
        p, a = [Fraction(1), Fraction(2), Fraction(4)], [Fraction(1), Fraction(2), Fraction(3)]
        abs_err = sum(abs(x - y) for x, y in zip(p, a))
        sq_err = sum((x - y) ** 2 for x, y in zip(p, a))
        assert float(abs_err / 3) == FIXTURE["mae"]
        assert float(100 * abs_err / sum(abs(y - 2) for y in a)) == FIXTURE["rae_pct"]
        assert math.isclose(math.sqrt(sq_err / 3), FIXTURE["rmse"], rel_tol=1e-15)
        assert math.isclose(100 * math.sqrt(sq_err / 2), FIXTURE["rrse_pct"], rel_tol=1e-15)

    def test_mean_predictor_is_one_hundred_percent(self):
        a = np.array([3.0, 7.0, 1.0, 9.0, 5.0])
        m = regression_metrics(np.full(5, a.mean()), a)
        assert m.rae_pct == pytest.approx(100.0, abs=1e-12) and m.rrse_pct == pytest.approx(100.0, abs=1e-12)
        assert m.correlation is None

    def test_constant_actual_is_undefined(self):
        m = regression_metrics([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
        assert m.rae_pct is None and m.rrse_pct is None and m.correlation is None
        assert m.mae == pytest.approx(2 / 3)

    def test_errors(self):
        with pytest.raises(ContractError):
            regression_metrics([1.0], [1.0, 2.0])
        with pytest.raises(ContractError):
            regression_metrics([], [])

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=30),
           st.floats(0.01, 100))
    def test_matches_loop_oracle_and_is_scale_free(self, pairs, scale):
        p, a = np.array(pairs).T
        if np.ptp(a) < 1e-3 or np.ptp(p) < 1e-3:
            return
        m = regression_metrics(p, a)
        ref = metrics_by_loop(p, a)
        for name, value in ref.items():
            assert getattr(m, name) == pytest.approx(value, rel=1e-9, abs=1e-9)
        s = regression_metrics(p * scale, a * scale)
        assert s.mae == pytest.approx(scale * m.mae, rel=1e-9)
        assert s.rae_pct == pytest.approx(m.rae_pct, rel=1e-9)
        assert s.rrse_pct == pytest.approx(m.rrse_pct, rel=1e-9)
        assert -1.0 <= m.correlation <= 1.0


class TestHaversineSummary:
    def test_nearest_rank(self):
        v = np.arange(1.0, 101.0)
        assert nearest_rank(v, 0.95) == 95.0
        assert nearest_rank(np.array([4.0]), 0.95) == 4.0

    def test_report_from_points(self):
        pred = [GeoPoint(37.0, 25.0), GeoPoint(37.0, 25.0)]
        actual = [GeoPoint(37.0, 25.0), GeoPoint(38.0, 25.0)]
        r = haversine_report(pred, actual)
        d = haversine_km(GeoPoint(37.0, 25.0), GeoPoint(38.0, 25.0))
        assert r.n_predictions == 2 and r.mean_km == pytest.approx(d / 2) and r.p95_km == pytest.approx(d)

    def test_mean_is_left_to_right(self):
        d = np.array([1e16, 1.0, -1e16, 1.0])
        total = 0.0
        for x in d:
            total += x
        assert summarize_distances(d).mean_km == total / 4

    def test_errors(self):
        with pytest.raises(ContractError):
            summarize_distances(np.array([]))
        with pytest.raises(ContractError):
            haversine_report([GeoPoint(0, 0)], [])


class TestCrossValidation:
    def test_linear_matches_explicit_loop(self):
        d = random_dataset(100)
        res = cross_validate(d, PositionPredictor(LinearRegressor(), 10, target_mode="absolute"), k=10, seed=0)
        folds = kfold_assign(d, 10, 0)
        for col, metrics in ((0, res.lon), (1, res.lat)):
            expected = explicit_cv_linear(d.X, d.y[:, col], folds, 10)
            assert np.max(np.abs(res.predictions[:, col] - expected)) < 1e-9
            ref = metrics_by_loop(expected, d.y[:, col])
            for name, value in ref.items():
                assert abs(getattr(metrics, name) - value) < 1e-9

    def test_every_instance_predicted_once(self):
        d = random_dataset(37, seed=3)
        res = cross_validate(d, PositionPredictor(LinearRegressor(), 10), k=5, seed=2)
        assert np.bincount(res.folds).sum() == 37 and np.all(np.isfinite(res.predictions))
        assert res.lon.n == 37 and res.mean_train_seconds >= 0

    def test_leave_one_out(self):
        d = random_dataset(12, seed=4)
        res = cross_validate(d, PositionPredictor(LinearRegressor(), 10, target_mode="absolute"), k=12)
        for i in range(12):
            keep = np.arange(12) != i
            m = LinearRegressor().fit(d.X[keep], d.y[keep, 1])
            assert res.predictions[i, 1] == pytest.approx(m.predict(d.X[i:i + 1])[0], abs=1e-9)

    def test_parallel_equals_serial(self):
        d = random_dataset(60, seed=5)
        model = PositionPredictor(LinearRegressor(), 10)
        a = cross_validate(d, model, k=6, seed=1)
        b = cross_validate(d, model, k=6, seed=1, workers=3)
        assert np.array_equal(a.predictions, b.predictions)

    def test_fold_failure_names_fold(self):
        d = random_dataset(20)
        d.X[:] = d.X[0]  # every row identical: no fold can be fitted
        with pytest.raises(ModelError, match="fold"):
            cross_validate(d, PositionPredictor(LinearRegressor(), 10), k=4)


class TestCompare:
    def test_table_layout(self):
        d = random_dataset(30)
        lin = PositionPredictor(LinearRegressor(), 10).fit(d.X, d.y)
        table = compare_predictors(d, [KinematicPredictor(10), lin])
        rows = list(csv.reader(io.StringIO(table.to_csv())))
        assert tuple(rows[0]) == COMPARISON_COLUMNS
        assert [r[0] for r in rows[1:]] == ["kinematic", "linear"]
        assert rows[2][2:4] == ["30", "30"]
        assert table.to_text().splitlines()[0].split() == list(COMPARISON_COLUMNS)

    def test_interval_mismatch(self):
        d = random_dataset(30)
        lin = PositionPredictor(LinearRegressor(), 4).fit(d.X, d.y)
        with pytest.raises(ContractError):
            compare_predictors(d, [lin])

    def test_empty_test_set(self):
        with pytest.raises(ContractError):
            compare_predictors(random_dataset(0), [KinematicPredictor(10)])

    def test_fmt_interval(self):
        assert fmt_interval(10.0) == "10" and fmt_interval(7.5) == "7.5"
