"""End-to-end experiment: data, per-interval datasets, model grid training, CV and comparison reports.

Everything is a pure function of the configuration. Wall-clock timings go
to the manifest only, never into report files, so reports of two runs of
the same configuration are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import yaml

from .dataset import DEFAULT_INTERVALS, DEFAULT_TOLERANCE_S, Dataset, build_instances, build_window_instances, \
    chronological_split
from .eval import ComparisonTable, fmt_interval, compare_predictors, cross_validate, format_table
from .geo import DEFAULT_EARTH, EarthModel
from .ingest import AEGEAN_BOX, FilterRules, filter_records, group_sort, parse_ais_csv
from .models.predictor import KinematicPredictor, ModelSpec, reference_grid
from .models.serialization import save_model
from .synth import FleetConfig, Regime, generate_fleet

STAGES = ("train", "cv", "compare")
CV_COLUMNS = ("id", "algorithm", "interval_min", "features", "target", "correlation", "mae", "rmse",
              "rae_pct", "rrse_pct", "n")


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment definition.

    Data comes from `input_csv` when set, otherwise from `fleet`.
    `bounding_box` is ``(lat_min, lat_max, lon_min, lon_max)`` or None.
    """

    output_dir: str = "experiment-out"
    input_csv: Optional[str] = None
    fleet: FleetConfig = FleetConfig()
    bounding_box: Optional[tuple[float, float, float, float]] = AEGEAN_BOX
    intervals: tuple[float, ...] = DEFAULT_INTERVALS
    grid: tuple[ModelSpec, ...] = tuple(reference_grid())
    tolerance_s: float = DEFAULT_TOLERANCE_S
    split_fraction: float = 0.75
    k: int = 10
    cv_seed: int = 0
    workers: int = 1
    earth_radius_km: float = DEFAULT_EARTH.radius_km

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(float(i) for i in self.intervals))
        object.__setattr__(self, "grid", tuple(self.grid))
        if not self.intervals or any(i <= 0 for i in self.intervals):
            raise ConfigError(f"intervals must be a non-empty list of positive numbers, got {self.intervals}")
        if len(set(self.intervals)) != len(self.intervals):
            raise ConfigError("intervals must be distinct")
        if not 0 < self.split_fraction < 1:
            raise ConfigError(f"split fraction must lie in (0, 1), got {self.split_fraction}")
        if self.k < 2:
            raise ConfigError(f"k must be at least 2, got {self.k}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        ids = [s.id for s in self.grid]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"model ids must be unique, got {ids}")
        if any(s.algorithm == "kinematic" for s in self.grid):
            raise ConfigError("the kinematic baseline is always compared; do not list it in the grid")

    @property
    def earth(self) -> EarthModel:
        return EarthModel(self.earth_radius_km)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = [_spec_dict(s) for s in self.grid]
        return json.loads(json.dumps(d))

    def digest(self) -> str:
        """Digest of everything that affects results; the output location and worker count do not."""
        d = self.to_dict()
        del d["output_dir"], d["workers"]
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _spec_dict(s: ModelSpec) -> dict:
    return {"id": s.id, "algorithm": s.algorithm, "params": dict(s.params),
            "features": list(s.features) if s.features is not None else None, "target_mode": s.target_mode}


def _fleet_from(d: Mapping) -> FleetConfig:
    d = dict(d)
    if "regimes" in d:
        d["regimes"] = tuple(Regime(**{k: tuple(v) if isinstance(v, list) else v for k, v in r.items()})
                             for r in d["regimes"])
    for key in ("emission_interval_s", "start_box"):
        if key in d:
            d[key] = tuple(d[key])
    return FleetConfig(**d)


def _grid_from(value) -> tuple[ModelSpec, ...]:
    if value is None or value == "reference":
        return tuple(reference_grid())
    specs = []
    for entry in value:
        entry = dict(entry)
        specs.append(ModelSpec(str(entry.pop("id")), entry.pop("algorithm"), dict(entry.pop("params", {}) or {}),
                               entry.pop("features", None), entry.pop("target_mode", "offset")))
        if entry:
            raise ConfigError(f"unknown model keys {sorted(entry)}")
    return tuple(specs)


def config_from_mapping(raw: Mapping) -> ExperimentConfig:
    """Build a config from parsed YAML/JSON. Unknown keys are an error."""
    raw = dict(raw or {})
    kwargs = {}
    source = dict(raw.pop("input", {}) or {})
    if "csv" in source:
        kwargs["input_csv"] = str(source.pop("csv"))
    if "synth" in source:
        kwargs["fleet"] = _fleet_from(source.pop("synth") or {})
    if source:
        raise ConfigError(f"unknown input keys {sorted(source)}")
    kwargs["grid"] = _grid_from(raw.pop("models", None))
    if "bounding_box" in raw:
        box = raw.pop("bounding_box")
        kwargs["bounding_box"] = tuple(box) if box is not None else None
    for key in ("output_dir", "intervals", "tolerance_s", "split_fraction", "k", "cv_seed", "workers",
                "earth_radius_km"):
        if key in raw:
            kwargs[key] = raw.pop(key)
    if raw:
        raise ConfigError(f"unknown config keys {sorted(raw)}")
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(raw or {})


def with_overrides(cfg: ExperimentConfig, *, output_dir=None, input_csv=None, intervals=None, models=None,
                   epochs=None, workers=None, seed=None, k=None) -> ExperimentConfig:
    """Apply command-line overrides; `models` selects grid ids, `epochs` rewrites every MLP entry."""
    changes = {}
    if output_dir is not None:
        changes["output_dir"] = str(output_dir)
    if input_csv is not None:
        changes["input_csv"] = str(input_csv)
    if intervals:
        changes["intervals"] = tuple(intervals)
    if workers is not None:
        changes["workers"] = workers
    if k is not None:
        changes["k"] = k
    if seed is not None:
        changes["fleet"] = replace(cfg.fleet, seed=seed)
    grid = cfg.grid
    if models:
        wanted = [str(m) for m in models]
        missing = set(wanted) - {s.id for s in grid}
        if missing:
            raise ConfigError(f"unknown model ids {sorted(missing)}")
        grid = tuple(s for s in grid if s.id in wanted)
    if epochs is not None:
        grid = tuple(replace(s, params={**s.params, "epochs": epochs}) if s.algorithm in ("mlp", "window-mlp")
                     else s for s in grid)
    changes["grid"] = grid
    try:
        return replace(cfg, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_streams(cfg: ExperimentConfig):
    """Records from the configured source, filtered and grouped per vessel."""
    if cfg.input_csv:
        with open(cfg.input_csv, "rb") as fh:
            records = parse_ais_csv(fh).records
    else:
        records = generate_fleet(cfg.fleet)
    kept, _ = filter_records(records, FilterRules(bounding_box=cfg.bounding_box))
    return group_sort(kept)


@dataclass
class ExperimentResult:
    output_dir: Path
    manifest: dict
    predictors: dict = field(default_factory=dict)  # (spec id, interval) -> fitted predictor
    comparison: Optional[ComparisonTable] = None
    cv_rows: list = field(default_factory=list)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.9f}"
    return str(v)


def _interval_tag(i: float) -> str:
    return f"{int(i):02d}" if float(i).is_integer() else str(i).replace(".", "_")


class _Manifest:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.path = out / "manifest.json"
        self.data = {"config_digest": cfg.digest(), "config": cfg.to_dict(), "complete": False,
                     "stages_done": [], "failed_stage": None, "error": None, "models": [], "reports": [],
                     "timings_s": {}}
        self.write()

    def write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, stages: Sequence[str] = STAGES) -> ExperimentResult:
    """Run the requested stages, writing models, reports and ``manifest.json`` under `cfg.output_dir`.

    On failure the manifest stays marked incomplete with the failing stage,
    and `ExperimentError` is raised.
    """
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stages {sorted(unknown)}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(cfg, out)
    result = ExperimentResult(out, manifest.data)
    stage = "data"
    try:
        started = time.perf_counter()
        streams = load_streams(cfg)
        point = {i: build_instances(streams, i, cfg.tolerance_s) for i in cfg.intervals}
        window = {}
        if any(s.is_window for s in cfg.grid):
            window = {i: build_window_instances(streams, i, cfg.tolerance_s) for i in cfg.intervals}
        splits = {i: chronological_split(point[i], cfg.split_fraction) for i in cfg.intervals}
        wsplits = {i: chronological_split(window[i], cfg.split_fraction) for i in window}
        manifest.data["datasets"] = [{"interval_min": i, "point_instances": len(point[i]),
                                      "window_instances": len(window[i]) if i in window else None,
                                      "train": len(splits[i][0]), "test": len(splits[i][1])}
                                     for i in cfg.intervals]
        _done(manifest, stage, started)

        if "train" in stages or "compare" in stages:
            stage = "train"
            started = time.perf_counter()
            result.predictors = _train(cfg, splits, wsplits)
            _save_models(cfg, out, result.predictors, manifest)
            _done(manifest, stage, started)

        if "cv" in stages:
            stage = "cv"
            started = time.perf_counter()
            result.cv_rows, train_seconds = _cross_validate(cfg, point, window)
            _write_report(out, "cv", CV_COLUMNS, result.cv_rows, manifest)
            manifest.data["timings_s"]["cv_mean_fold_train"] = train_seconds
            _done(manifest, stage, started)

        if "compare" in stages:
            stage = "compare"
            started = time.perf_counter()
            rows = []
            for i in cfg.intervals:
                test = splits[i][1]
                preds = [KinematicPredictor(i, cfg.earth_radius_km)]
                preds += [result.predictors[(s.id, i)] for s in cfg.grid]
                table = compare_predictors(test, preds, cfg.earth, wsplits[i][1] if i in wsplits else None)
                rows.extend(table.rows)
            result.comparison = ComparisonTable(rows)
            _register_report(out, "compare", result.comparison.to_csv(), result.comparison.to_text(), manifest)
            _done(manifest, stage, started)
    except Exception as exc:
        manifest.data["failed_stage"] = stage
        manifest.data["error"] = f"{type(exc).__name__}: {exc}"
        manifest.write()
        raise ExperimentError(stage, exc) from exc
    manifest.data["complete"] = True
    manifest.write()
    return result


def _done(manifest: _Manifest, stage: str, started: float) -> None:
    manifest.data["stages_done"].append(stage)
    manifest.data["timings_s"][stage] = time.perf_counter() - started
    manifest.write()


def _train(cfg: ExperimentConfig, splits, wsplits) -> dict:
    jobs = []
    for spec in cfg.grid:
        for i in cfg.intervals:
            data = (wsplits if spec.is_window else splits)[i][0]
            jobs.append(((spec.id, i), spec, data))

    def fit(job):
        key, spec, data = job
        if len(data) == 0:
            raise ValueError(f"model {spec.id}: no training instances at interval {key[1]:g}")
        return key, spec.build(key[1], cfg.earth).fit_dataset(data)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            fitted = list(pool.map(fit, jobs))
    else:
        fitted = [fit(j) for j in jobs]
    return dict(fitted)


def _save_models(cfg: ExperimentConfig, out: Path, predictors: dict, manifest: _Manifest) -> None:
    for spec in cfg.grid:
        for i in cfg.intervals:
            p = predictors[(spec.id, i)]
            slug = re.sub(r"[^A-Za-z0-9._-]+", "-", f"{spec.id}-{p.label}").strip("-")
            rel = Path("models") / slug / f"interval-{_interval_tag(i)}.model"
            path = out / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(save_model(p))
            manifest.data["models"].append({"id": spec.id, "label": p.label, "interval_min": i,
                                            "path": rel.as_posix(), "sha256": _sha256(path)})
    manifest.write()


def _cross_validate(cfg: ExperimentConfig, point: dict, window: dict):
    rows, seconds = [], []
    for spec in cfg.grid:
        for i in cfg.intervals:
            data = (window if spec.is_window else point)[i]
            res = cross_validate(data, spec.build(i, cfg.earth), cfg.k, cfg.cv_seed, cfg.workers)
            seconds.append(res.mean_train_seconds)
            feats = "window" if spec.is_window else ",".join(spec.features or ("speed", "lon", "lat", "course"))
            for target, m in (("lon", res.lon), ("lat", res.lat)):
                rows.append([spec.id, spec.algorithm, fmt_interval(i), feats, target, m.correlation, m.mae, m.rmse,
                             m.rae_pct, m.rrse_pct, m.n])
    return rows, (sum(seconds) / len(seconds) if seconds else None)


def _register_report(out: Path, name: str, csv_text: str, table_text: str, manifest: _Manifest) -> None:
    """One manifest entry per report, rendered both as CSV and as an aligned table."""
    entry = {"name": name, "files": {}}
    for ext, text in (("csv", csv_text), ("txt", table_text)):
        path = out / f"{name}.{ext}"
        path.write_text(text)
        entry["files"][ext] = {"path": path.name, "sha256": _sha256(path)}
    manifest.data["reports"].append(entry)
    manifest.write()


def _write_report(out: Path, name: str, columns, rows, manifest: _Manifest) -> None:
    cells = [[_fmt(v) for v in r] for r in rows]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(cells)
    _register_report(out, name, buf.getvalue(), format_table(columns, cells), manifest)


def write_dataset(d: Dataset, path: str) -> None:
    with open(path, "w", newline="") as fh:
        d.to_csv(fh)
