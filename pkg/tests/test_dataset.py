import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import T0, make_record
from driftcast.dataset import (Dataset, FoldError, SplitError, TrainingInstance, WindowInstance, build_instances,
                               build_window_instances, chronological_split, kfold_assign, window_feature_names)
from driftcast.ingest import group_sort
from driftcast.synth import FleetConfig, Regime, generate_fleet
from oracles import pair_by_enumeration


def streams_at(offsets_s, mmsi=239923000):
    recs = [make_record(t, mmsi=mmsi, lat=37.0 + i * 0.001, lon=25.0 + i * 0.002, sog=10.0 + i, cog=float(i))
            for i, t in enumerate(offsets_s)]
    return group_sort(recs)


class TestBuildInstances:
    def test_exact_spacing(self):
        d = build_instances(streams_at([0, 120, 240]), 2, tolerance_s=0)
        assert len(d) == 2
        assert list(d.t0 - T0) == [0, 120] and list(d.t_target - T0) == [120, 240]

    def test_gap_outside_tolerance(self):
        assert len(build_instances(streams_at([0, 180]), 2, tolerance_s=30)) == 0

    def test_tie_breaks_to_earlier(self):
        d = build_instances(streams_at([0, 115, 125]), 2, tolerance_s=30)
        assert len(d) == 1
        assert d.t_target[0] - T0 == 115
        assert pair_by_enumeration([0, 115, 125], 120, 30) == [1, None, None]

    def test_features_and_targets(self):
        d = build_instances(streams_at([0, 120]), 2, tolerance_s=0)
        inst = d.instances()[0]
        assert isinstance(inst, TrainingInstance)
        assert (inst.speed, inst.lon, inst.lat, inst.course) == (10.0, 25.0, 37.0, 0.0)
        assert (inst.next_lon, inst.next_lat) == (25.002, 37.001)
        assert inst.interval_min == 2 and inst.mmsi == 239923000

    def test_never_pairs_across_vessels(self):
        recs = [make_record(0, mmsi=111111111), make_record(120, mmsi=222222222)]
        assert len(build_instances(group_sort(recs), 2, 0)) == 0

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            build_instances({}, 0)
        with pytest.raises(ValueError):
            build_instances({}, 2, -1)

    @settings(max_examples=60)
    @given(st.lists(st.integers(0, 2000), min_size=1, max_size=40, unique=True), st.integers(1, 10),
           st.integers(0, 90))
    def test_matches_enumeration_oracle(self, times, interval_min, tol):
        times = sorted(times)
        d = build_instances(streams_at(times), interval_min, tol)
        expected = [(times[i], times[j]) for i, j in enumerate(pair_by_enumeration(times, interval_min * 60, tol))
                    if j is not None]
        assert list(zip(d.t0 - T0, d.t_target - T0)) == expected
        assert len(d) <= len(times)

    def test_no_fabricated_values(self):
        cfg = FleetConfig(n_vessels=5, duration_min=60, position_noise_m=20, seed=1)
        streams = group_sort(generate_fleet(cfg))
        d = build_instances(streams, 4)
        rows = {(r.mmsi, r.timestamp): (r.sog, r.lon, r.lat, r.cog) for s in streams.values() for r in s}
        for i in range(len(d)):
            assert tuple(d.X[i]) == rows[(d.mmsi[i], d.t0[i])]
            assert tuple(d.y[i]) == rows[(d.mmsi[i], d.t_target[i])][1:3]

    def test_monotone_scarcity(self):
        cfg = FleetConfig(n_vessels=20, duration_min=120, emission_interval_s=(20, 60), seed=5)
        streams = group_sort(generate_fleet(cfg))
        counts = [len(build_instances(streams, i)) for i in (2, 4, 10, 20, 30)]
        assert counts == sorted(counts, reverse=True)


def window_oracle(times, window, interval_s, tol, max_gap):
    pairs = pair_by_enumeration(times, interval_s, tol)
    out = []
    for end in range(window - 1, len(times)):
        span = times[end - window + 1: end + 1]
        if all(b - a <= max_gap for a, b in zip(span, span[1:])) and pairs[end] is not None:
            out.append((times[end], times[pairs[end]]))
    return out


class TestWindows:
    def test_nine_reports(self):
        assert len(build_window_instances(streams_at(range(0, 540, 60)), 1, 0)) == 0

    def test_twelve_even_reports(self):
        times = list(range(0, 720, 60)) + [720, 780]
        d = build_window_instances(streams_at(times), 1, 0)
        # windows end at reports 9..13; the last has no later report
        assert len(d) == 4
        assert window_oracle(times, 10, 60, 0, 180) == list(zip(d.t0 - T0, d.t_target - T0))
        only_twelve = build_window_instances(streams_at(range(0, 720, 60)), 1, 0)
        assert len(only_twelve) == 2  # three candidate windows, the newest lacks a target

    def test_gap_breaks_window(self):
        times = [0, 60, 120, 500, 560, 620, 680, 740, 800, 860, 920, 980, 1040, 1100]
        d = build_window_instances(streams_at(times), 1, 0, max_gap_s=180)
        assert list(zip(d.t0 - T0, d.t_target - T0)) == window_oracle(times, 10, 60, 0, 180)

    def test_window_layout(self):
        d = build_window_instances(streams_at(range(0, 660, 60)), 1, 0)
        assert d.feature_names == window_feature_names(10) and d.X.shape == (1, 40)
        inst = d.instances()[0]
        assert isinstance(inst, WindowInstance) and len(inst.window) == 10
        assert inst.window[-1] == tuple(d.anchor[0])
        assert inst.window[0][1] == 25.0  # oldest first

    @settings(max_examples=40)
    @given(st.lists(st.integers(0, 3000), min_size=1, max_size=40, unique=True), st.integers(1, 5),
           st.integers(0, 40), st.integers(30, 300))
    def test_matches_oracle_and_never_exceeds_point_count(self, times, interval_min, tol, max_gap):
        times = sorted(times)
        s = streams_at(times)
        w = build_window_instances(s, interval_min, tol, max_gap_s=max_gap)
        assert list(zip(w.t0 - T0, w.t_target - T0)) == window_oracle(times, 10, interval_min * 60, tol, max_gap)
        assert len(w) <= len(build_instances(s, interval_min, tol))


def dataset_with_times(times):
    n = len(times)
    return Dataset(np.zeros((n, 4)), np.zeros((n, 2)), np.zeros(n), np.asarray(times), np.asarray(times) + 60, 1)


class TestSplit:
    def test_three_to_one(self):
        train, test = chronological_split(dataset_with_times([4, 1, 3, 2]), 0.75)
        assert sorted(train.t0) == [1, 2, 3] and list(test.t0) == [4]

    def test_shared_timestamp_fails(self):
        with pytest.raises(SplitError):
            chronological_split(dataset_with_times([5, 5, 5, 5]), 0.75)

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.1])
    def test_bad_fraction(self, frac):
        with pytest.raises(SplitError):
            chronological_split(dataset_with_times([1, 2]), frac)

    def test_too_small(self):
        with pytest.raises(SplitError):
            chronological_split(dataset_with_times([1]), 0.5)

    @given(st.lists(st.integers(0, 30), min_size=2, max_size=60), st.floats(0.05, 0.95))
    def test_boundary_properties(self, times, frac):
        d = dataset_with_times(times)
        try:
            train, test = chronological_split(d, frac)
        except SplitError:
            # only when no boundary exists within the fraction
            counts = np.searchsorted(np.sort(times), np.unique(times), side="left")
            assert not np.any((counts >= 1) & (counts <= frac * len(times)))
            return
        assert len(train) + len(test) == len(d)
        assert train.t0.max() < test.t0.min()
        assert len(train) <= frac * len(d)
        # no later boundary would still respect the fraction
        later = np.sum(d.t0 <= test.t0.min())
        assert later > frac * len(d)


class TestKFold:
    def test_ten_rows(self):
        assert sorted(kfold_assign(dataset_with_times(range(10)), 10, 0)) == list(range(10))

    def test_eleven_rows(self):
        sizes = np.bincount(kfold_assign(dataset_with_times(range(11)), 10, 0))
        assert sorted(sizes) == [1] * 9 + [2]

    def test_deterministic(self):
        d = dataset_with_times(range(37))
        assert np.array_equal(kfold_assign(d, 10, 3), kfold_assign(d, 10, 3))
        assert not np.array_equal(kfold_assign(d, 10, 3), kfold_assign(d, 10, 4))

    def test_errors(self):
        with pytest.raises(FoldError):
            kfold_assign(dataset_with_times(range(5)), 10, 0)
        with pytest.raises(FoldError):
            kfold_assign(dataset_with_times(range(5)), 1, 0)

    @given(st.integers(2, 12), st.integers(0, 50), st.integers(0, 1000))
    def test_partition(self, k, extra, seed):
        n = k + extra
        labels = kfold_assign(dataset_with_times(range(n)), k, seed)
        sizes = np.bincount(labels, minlength=k)
        assert len(labels) == n and sizes.max() - sizes.min() <= 1


def test_csv_round_trip():
    d = build_instances(streams_at([0, 120, 240, 360]), 2, 0)
    buf = io.StringIO()
    d.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "mmsi,t0,t_target,interval_min,speed,lon,lat,course,next_lon,next_lat"
    back = Dataset.from_csv(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.X, d.X) and np.array_equal(back.y, d.y) and np.array_equal(back.t0, d.t0)
    assert back.interval_min == 2 and back.kind == "point"


def test_turning_fleet_window_count_strictly_smaller():
    cfg = FleetConfig(n_vessels=6, duration_min=30, emission_interval_s=(20, 60),
                      regimes=(Regime(), Regime("constant-turn", 1.0, 5.0)), seed=3)
    s = group_sort(generate_fleet(cfg))
    assert len(build_window_instances(s, 4)) < len(build_instances(s, 4))
