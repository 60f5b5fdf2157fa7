"""Stateless position-forecast service over a registry of pre-trained predictors.

The registry is loaded and probed once at startup and never mutated. Each
request carries the vessel's current report; nothing about the vessel is
remembered between requests.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .geo import DEFAULT_EARTH, EarthModel
from .ingest import SOG_MAX
from .models.base import ModelError
from .models.predictor import predict_position
from .models.serialization import load_model, read_header

MODEL_SUFFIX = ".model"
PROBE = (10.0, 25.0, 37.5, 90.0)  # speed, lon, lat, course


class ServiceError(Exception):
    status = 500

    def __init__(self, message: str, **detail):
        super().__init__(message)
        self.message = message
        self.detail = detail

    def to_json(self) -> dict:
        return {"error": self.message, **self.detail}


class RequestValidationError(ServiceError):
    status = 400


class UnknownIntervalError(ServiceError):
    status = 404


class RegistryError(RuntimeError):
    """Startup failure; the message names the offending file."""


@dataclass(frozen=True)
class ModelEntry:
    interval_min: float
    path: str
    sha256: str
    label: str
    kind: str

    @property
    def version(self) -> str:
        return self.sha256[:12]


@dataclass(frozen=True)
class ModelRegistry:
    predictors: dict
    entries: dict
    earth: EarthModel = DEFAULT_EARTH

    @property
    def intervals(self) -> list[float]:
        return sorted(self.predictors)

    def manifest(self) -> list[dict]:
        return [asdict(self.entries[i]) | {"model_version": self.entries[i].version} for i in self.intervals]


def _key(interval) -> float:
    return float(interval)


def _probe(predictor) -> bool:
    speed, lon, lat, course = PROBE
    if getattr(predictor, "window", 0):
        out = predictor.predict(np.tile(PROBE, predictor.window).reshape(1, -1))[0]
        return bool(np.all(np.isfinite(out)))
    p = predict_position(predictor, speed, lon, lat, course)
    return math.isfinite(p.lat_deg) and math.isfinite(p.lon_deg)


def load_registry(source: Union[str, Path, Iterable[Union[str, Path]]],
                  earth: EarthModel = DEFAULT_EARTH) -> ModelRegistry:
    """Load every model file from a directory (``*.model``) or an explicit list of paths.

    Fails as a whole on the first unreadable, corrupt, duplicate or
    non-finite model.
    """
    if isinstance(source, (str, Path)) and Path(source).is_dir():
        paths = sorted(Path(source).glob(f"*{MODEL_SUFFIX}"))
    elif isinstance(source, (str, Path)):
        paths = [Path(source)]
    else:
        paths = [Path(p) for p in source]
    if not paths:
        raise RegistryError(f"no model files found in {source}")

    predictors, entries = {}, {}
    for path in paths:
        try:
            blob = path.read_bytes()
            header, _ = read_header(blob)
            predictor = load_model(blob)
        except (OSError, ModelError, ValueError, KeyError) as exc:
            raise RegistryError(f"{path}: {exc}") from exc
        key = _key(predictor.interval_min)
        if key in predictors:
            raise RegistryError(f"{path}: duplicate interval {key:g} (already loaded from {entries[key].path})")
        try:
            ok = _probe(predictor)
        except (ModelError, ValueError) as exc:
            raise RegistryError(f"{path}: probe prediction failed: {exc}") from exc
        if not ok:
            raise RegistryError(f"{path}: probe prediction is not finite")
        predictors[key] = predictor
        entries[key] = ModelEntry(key, str(path), hashlib.sha256(blob).hexdigest(), header["label"],
                                  header["kind"])
    return ModelRegistry(predictors, entries, earth)


def registry_from_predictors(predictors: Sequence, earth: EarthModel = DEFAULT_EARTH) -> ModelRegistry:
    """In-memory registry, mainly for tests and embedding."""
    from .models.serialization import save_model

    preds, entries = {}, {}
    for p in predictors:
        key = _key(p.interval_min)
        if key in preds:
            raise RegistryError(f"duplicate interval {key:g}")
        preds[key] = p
        entries[key] = ModelEntry(key, "<memory>", hashlib.sha256(save_model(p)).hexdigest(), p.label, p.kind)
    return ModelRegistry(preds, entries, earth)


@dataclass(frozen=True)
class PredictionRequest:
    lat: float
    lon: float
    sog: float
    cog: float
    interval_min: float

    FIELDS = ("lat", "lon", "sog", "cog", "interval_min")

    @classmethod
    def from_json(cls, body) -> "PredictionRequest":
        if not isinstance(body, dict):
            raise RequestValidationError("request body must be a JSON object")
        missing = [f for f in cls.FIELDS if f not in body]
        if missing:
            raise RequestValidationError(f"missing fields: {', '.join(missing)}")
        values = {}
        for name in cls.FIELDS:
            v = body[name]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise RequestValidationError(f"{name} must be a number")
            values[name] = float(v)
        return cls(**values)

    def validate(self) -> None:
        problems = []
        for name in self.FIELDS:
            if not math.isfinite(getattr(self, name)):
                problems.append(f"{name} is not finite")
        if not problems:
            if not -90.0 <= self.lat <= 90.0:
                problems.append("lat must be within [-90, 90]")
            if not -180.0 <= self.lon < 180.0:
                problems.append("lon must be within [-180, 180)")
            if not 0.0 <= self.sog <= SOG_MAX:
                problems.append(f"sog must be within [0, {SOG_MAX}]")
            if not 0.0 <= self.cog < 360.0:
                problems.append("cog must be within [0, 360)")
            if self.interval_min <= 0:
                problems.append("interval_min must be positive")
        if problems:
            raise RequestValidationError("invalid request", problems=problems)


@dataclass(frozen=True)
class PredictionResponse:
    lat: float
    lon: float
    predictor: str
    model_version: str
    compute_micros: float

    def to_json(self) -> dict:
        return asdict(self)


def handle_predict(req: PredictionRequest, reg: ModelRegistry) -> PredictionResponse:
    """Answer one forecast query; timing covers validation and inference only."""
    started = time.perf_counter_ns()
    req.validate()
    key = _key(req.interval_min)
    predictor = reg.predictors.get(key)
    if predictor is None:
        raise UnknownIntervalError(f"no model for interval {req.interval_min:g}",
                                   available_intervals=reg.intervals)
    if getattr(predictor, "window", 0):
        raise RequestValidationError(f"model for interval {key:g} needs a report window, not a single report")
    point = predict_position(predictor, req.sog, req.lon, req.lat, req.cog)
    elapsed = (time.perf_counter_ns() - started) / 1000.0
    entry = reg.entries[key]
    return PredictionResponse(point.lat_deg, point.lon_deg, entry.label, entry.version, elapsed)


@dataclass(frozen=True)
class LatencyStats:
    n: int
    mean_micros: Optional[float]
    median_micros: Optional[float]
    p99_micros: Optional[float]

    @property
    def defined(self) -> bool:
        return self.n > 0


@dataclass
class BatchResult:
    responses: list = field(default_factory=list)
    stats: LatencyStats = field(default_factory=lambda: LatencyStats(0, None, None, None))


def batch_predict(requests: Sequence[PredictionRequest], reg: ModelRegistry) -> BatchResult:
    """Answer many queries in order; a failing item holds its `ServiceError` instead of a response."""
    responses: list = []
    timings = []
    for req in requests:
        try:
            resp = handle_predict(req, reg)
        except ServiceError as exc:
            responses.append(exc)
            continue
        responses.append(resp)
        timings.append(resp.compute_micros)
    if not timings:
        return BatchResult(responses, LatencyStats(0, None, None, None))
    t = np.sort(np.asarray(timings))
    p99 = float(t[max(1, math.ceil(0.99 * len(t))) - 1])
    return BatchResult(responses, LatencyStats(len(t), float(t.mean()), float(np.median(t)), p99))


def create_app(reg: ModelRegistry):
    """FastAPI application exposing ``/predict``, ``/models`` and ``/healthz``."""
    app = FastAPI(title="driftcast", docs_url=None, redoc_url=None)

    @app.post("/predict")
    async def predict(request: Request):
        try:
            body = await request.json()
        except ValueError:
            return JSONResponse({"error": "body is not valid JSON"}, status_code=400)
        try:
            resp = handle_predict(PredictionRequest.from_json(body), reg)
        except ServiceError as exc:
            return JSONResponse(exc.to_json(), status_code=exc.status)
        return resp.to_json()

    @app.get("/models")
    async def models():
        return {"models": reg.manifest()}

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "intervals": reg.intervals}

    return app
