"""Supervised instances from per-vessel report streams.

A point instance pairs a report at ``t0`` with the same vessel's report one
prediction interval later. A window instance stacks ten consecutive reports
and pairs the last one the same way. Reports without a partner inside the
pairing tolerance are dropped, never interpolated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np

from .ingest import AisRecord

POINT_FEATURES = ("speed", "lon", "lat", "course")
TARGETS = ("next_lon", "next_lat")
WINDOW = 10
DEFAULT_TOLERANCE_S = 30
DEFAULT_MAX_GAP_S = 180
DEFAULT_INTERVALS = (4, 10, 20, 30)


class SplitError(ValueError):
    pass


class FoldError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingInstance:
    speed: float
    lon: float
    lat: float
    course: float
    next_lon: float
    next_lat: float
    interval_min: float
    mmsi: int
    t0: int


@dataclass(frozen=True)
class WindowInstance:
    window: tuple[tuple[float, float, float, float], ...]
    next_lon: float
    next_lat: float
    interval_min: float
    mmsi: int
    t0: int


def window_feature_names(size: int = WINDOW) -> list[str]:
    return [f"{name}_{i}" for i in range(size) for name in POINT_FEATURES]


@dataclass
class Dataset:
    """Column-oriented instance table.

    ``X`` holds features (4 per report, oldest report first for windows),
    ``y`` holds ``[next_lon, next_lat]``. The last four feature columns are
    always the anchor report ``speed, lon, lat, course``.
    """

    X: np.ndarray
    y: np.ndarray
    mmsi: np.ndarray
    t0: np.ndarray
    t_target: np.ndarray
    interval_min: float
    kind: str = "point"
    provenance: str = ""
    feature_names: list[str] = field(default_factory=lambda: list(POINT_FEATURES))

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1, 2)
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y), len(self.feature_names))
        self.mmsi = np.asarray(self.mmsi, dtype=np.int64)
        self.t0 = np.asarray(self.t0, dtype=np.int64)
        self.t_target = np.asarray(self.t_target, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def anchor(self) -> np.ndarray:
        return self.X[:, -4:]

    @property
    def elapsed_min(self) -> np.ndarray:
        return (self.t_target - self.t0) / 60.0

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.X[index], self.y[index], self.mmsi[index], self.t0[index],
                       self.t_target[index], self.interval_min, self.kind, self.provenance,
                       list(self.feature_names))

    def instances(self) -> list:
        out = []
        for i in range(len(self)):
            common = dict(next_lon=float(self.y[i, 0]), next_lat=float(self.y[i, 1]),
                          interval_min=self.interval_min, mmsi=int(self.mmsi[i]), t0=int(self.t0[i]))
            if self.kind == "window":
                rows = tuple(tuple(float(v) for v in r) for r in self.X[i].reshape(-1, 4))
                out.append(WindowInstance(window=rows, **common))
            else:
                out.append(TrainingInstance(*(float(v) for v in self.X[i]), **common))
        return out

    def to_csv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["mmsi", "t0", "t_target", "interval_min", *self.feature_names, *TARGETS])
        for i in range(len(self)):
            writer.writerow([int(self.mmsi[i]), int(self.t0[i]), int(self.t_target[i]),
                             repr(float(self.interval_min)),
                             *(repr(float(v)) for v in self.X[i]), *(repr(float(v)) for v in self.y[i])])

    @classmethod
    def from_csv(cls, stream: IO[str], provenance: str = "") -> "Dataset":
        reader = csv.reader(stream)
        header = next(reader)
        features = header[4:-2]
        rows = [r for r in reader if r]
        kind = "window" if len(features) > len(POINT_FEATURES) else "point"
        if not rows:
            raise ValueError("dataset file has no rows; interval unknown")
        arr = np.array([[float(v) for v in r] for r in rows])
        return cls(arr[:, 4:-2], arr[:, -2:], arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64),
                   arr[:, 2].astype(np.int64), float(arr[0, 3]), kind, provenance, features)


def _empty(interval_min: float, kind: str, provenance: str, names: list[str]) -> Dataset:
    return Dataset(np.zeros((0, len(names))), np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros(0),
                   interval_min, kind, provenance, names)


def _stream_arrays(stream: Sequence[AisRecord]):
    t = np.fromiter((r.timestamp for r in stream), dtype=np.int64, count=len(stream))
    feats = np.array([(r.sog, r.lon, r.lat, r.cog) for r in stream], dtype=float).reshape(-1, 4)
    return t, feats


def match_targets(t: np.ndarray, anchor_idx: np.ndarray, interval_s: float, tolerance_s: float) -> np.ndarray:
    """Index of each anchor's partner report, or -1.

    The partner is the later report whose time is closest to
    ``t[anchor] + interval_s`` within the tolerance, earliest on ties.
    """
    anchor_idx = np.asarray(anchor_idx, dtype=np.int64)
    if len(anchor_idx) == 0:
        return np.zeros(0, dtype=np.int64)
    goal = t[anchor_idx] + interval_s
    lo = np.searchsorted(t, goal - tolerance_s, side="left")
    lo = np.maximum(lo, anchor_idx + 1)
    hi = np.searchsorted(t, goal + tolerance_s, side="right") - 1
    pos = np.searchsorted(t, goal, side="left")
    before = np.clip(pos - 1, lo, hi)
    after = np.clip(pos, lo, hi)
    pick = np.where(np.abs(t[after] - goal) < np.abs(t[before] - goal), after, before)
    return np.where(lo <= hi, pick, -1)


def build_instances(streams: Mapping[int, Sequence[AisRecord]], interval_min: float,
                    tolerance_s: float = DEFAULT_TOLERANCE_S) -> Dataset:
    """Pair every report with the same vessel's report one interval later."""
    if interval_min <= 0:
        raise ValueError("interval must be positive")
    if tolerance_s < 0:
        raise ValueError("tolerance must be non-negative")
    provenance = f"point pairs, interval {interval_min} min, tolerance {tolerance_s} s"
    parts = []
    for mmsi in sorted(streams):
        stream = streams[mmsi]
        if len(stream) < 2:
            continue
        t, feats = _stream_arrays(stream)
        anchors = np.arange(len(t))
        partner = match_targets(t, anchors, interval_min * 60.0, tolerance_s)
        ok = partner >= 0
        if not ok.any():
            continue
        a, p = anchors[ok], partner[ok]
        parts.append((feats[a], feats[p][:, [1, 2]], np.full(len(a), mmsi), t[a], t[p]))
    if not parts:
        return _empty(interval_min, "point", provenance, list(POINT_FEATURES))
    X, y, m, t0, tt = (np.concatenate(c) for c in zip(*parts))
    return Dataset(X, y, m, t0, tt, interval_min, "point", provenance, list(POINT_FEATURES))


def build_window_instances(streams: Mapping[int, Sequence[AisRecord]], interval_min: float,
                           tolerance_s: float = DEFAULT_TOLERANCE_S, window: int = WINDOW,
                           max_gap_s: float = DEFAULT_MAX_GAP_S) -> Dataset:
    """Sliding windows of `window` consecutive reports with no gap above `max_gap_s`.

    The target is matched against the window's last report exactly as in
    `build_instances`, so every window instance has a point-instance twin.
    """
    if interval_min <= 0:
        raise ValueError("interval must be positive")
    names = window_feature_names(window)
    provenance = (f"windows of {window}, interval {interval_min} min, tolerance {tolerance_s} s, "
                  f"max gap {max_gap_s} s")
    parts = []
    for mmsi in sorted(streams):
        stream = streams[mmsi]
        if len(stream) < window:
            continue
        t, feats = _stream_arrays(stream)
        bad_gap = np.diff(t) > max_gap_s
        # window ending at i spans gaps i-window+1 .. i-1 (indices into diff)
        bad_count = np.concatenate([[0], np.cumsum(bad_gap)])
        ends = np.arange(window - 1, len(t))
        clean = bad_count[ends] - bad_count[ends - window + 1] == 0
        ends = ends[clean]
        partner = match_targets(t, ends, interval_min * 60.0, tolerance_s)
        ok = partner >= 0
        if not ok.any():
            continue
        ends, partner = ends[ok], partner[ok]
        idx = ends[:, None] + np.arange(-window + 1, 1)[None, :]
        X = feats[idx].reshape(len(ends), -1)
        parts.append((X, feats[partner][:, [1, 2]], np.full(len(ends), mmsi), t[ends], t[partner]))
    if not parts:
        return _empty(interval_min, "window", provenance, names)
    X, y, m, t0, tt = (np.concatenate(c) for c in zip(*parts))
    return Dataset(X, y, m, t0, tt, interval_min, "window", provenance, names)


def chronological_split(d: Dataset, train_fraction: float = 0.75) -> tuple[Dataset, Dataset]:
    """Split at a timestamp boundary: ``t0 < boundary`` trains, the rest tests.

    The boundary is the instance time giving the largest train share not
    exceeding `train_fraction`, with both sides non-empty.
    """
    if not 0 < train_fraction < 1:
        raise SplitError(f"train fraction must lie in (0, 1), got {train_fraction}")
    n = len(d)
    if n < 2:
        raise SplitError(f"need at least 2 instances to split, got {n}")
    times = np.unique(d.t0)
    # number of instances strictly before each candidate boundary
    before = np.searchsorted(np.sort(d.t0), times, side="left")
    ok = (before >= 1) & (before <= train_fraction * n)
    if not ok.any():
        raise SplitError("no timestamp boundary yields a non-empty train set within the fraction")
    boundary = times[np.flatnonzero(ok)[-1]]
    train = np.flatnonzero(d.t0 < boundary)
    test = np.flatnonzero(d.t0 >= boundary)
    return d.subset(train), d.subset(test)


def kfold_assign(d, k: int = 10, seed: int = 0) -> np.ndarray:
    """Seeded shuffle then round-robin fold labels; fold sizes differ by at most one."""
    n = len(d)
    if k < 2:
        raise FoldError(f"k must be at least 2, got {k}")
    if n < k:
        raise FoldError(f"{n} instances cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=np.int64)
    labels[order] = np.arange(n) % k
    return labels
