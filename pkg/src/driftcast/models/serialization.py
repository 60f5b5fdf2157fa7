"""Versioned, checksummed model container.

Layout::

    DRIFTCAST-MODEL\\n
    <header JSON>\\n
    <payload JSON>

The header carries the format version, predictor kind, interval, payload
length and its SHA-256. Arrays inside the payload are raw little-endian
buffers in base64, so a round trip is bit exact.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from sklearn.base import clone

from .base import ModelError
from .forest import RandomForestRegressor
from .linear import LinearRegressor
from .mlp import MLPRegressor
from .predictor import KinematicPredictor, PositionPredictor

MAGIC = b"DRIFTCAST-MODEL\n"
FORMAT_VERSION = 1

_ESTIMATORS = {"linear": LinearRegressor, "mlp": MLPRegressor, "forest": RandomForestRegressor}


class ModelLoadError(ModelError):
    pass


def _estimator_tag(est) -> str:
    for tag, cls in _ESTIMATORS.items():
        if isinstance(est, cls):
            return tag
    raise ModelError(f"cannot serialise estimator of type {type(est).__name__}")


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_digest(p) -> str:
    """Digest of the predictor's hyperparameters (not its learned weights)."""
    if isinstance(p, KinematicPredictor):
        cfg = {"kind": "kinematic", "interval_min": p.interval_min, "earth_radius_km": p.earth_radius_km}
    else:
        est = p.estimator
        cfg = {"kind": p.kind, "interval_min": p.interval_min, "features": p.features, "window": p.window,
               "target_mode": p.target_mode, "estimator": _estimator_tag(est),
               "params": {k: list(v) if isinstance(v, tuple) else v for k, v in est.get_params().items()}}
    return hashlib.sha256(_canonical(cfg)).hexdigest()


def _payload(p) -> dict:
    if isinstance(p, KinematicPredictor):
        return {"interval_min": p.interval_min, "earth_radius_km": p.earth_radius_km}
    if not hasattr(p, "lon_model_"):
        raise ModelError("cannot save an untrained predictor")
    return {
        "interval_min": p.interval_min,
        "features": list(p.features) if p.features is not None else None,
        "window": p.window,
        "target_mode": p.target_mode,
        "estimator": _estimator_tag(p.estimator),
        "columns": [int(c) for c in p.columns_],
        "n_train": int(p.n_train_),
        "lon_model": p.lon_model_.get_state(),
        "lat_model": p.lat_model_.get_state(),
    }


def save_model(p) -> bytes:
    payload = _canonical(_payload(p))
    header = {
        "format_version": FORMAT_VERSION,
        "kind": p.kind,
        "label": p.label,
        "interval_min": p.interval_min,
        "config_digest": config_digest(p),
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    return MAGIC + _canonical(header) + b"\n" + payload


def read_header(blob: bytes) -> tuple[dict, bytes]:
    if not blob.startswith(MAGIC):
        raise ModelLoadError("not a model file: bad magic")
    rest = blob[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise ModelLoadError("truncated model file: missing header")
    try:
        header = json.loads(rest[:nl])
    except ValueError as exc:
        raise ModelLoadError(f"corrupt header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise ModelLoadError(f"unsupported format version {header.get('format_version')!r}")
    payload = rest[nl + 1:]
    if len(payload) != header.get("payload_bytes"):
        raise ModelLoadError(f"truncated payload: {len(payload)} of {header.get('payload_bytes')} bytes")
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise ModelLoadError("payload checksum mismatch")
    return header, payload


def load_model(blob: bytes):
    header, raw = read_header(blob)
    body = json.loads(raw)
    if header["kind"] == "kinematic":
        return KinematicPredictor(body["interval_min"], body["earth_radius_km"])
    cls = _ESTIMATORS[body["estimator"]]
    lon_model = cls.from_state(body["lon_model"])
    lat_model = cls.from_state(body["lat_model"])
    p = PositionPredictor(clone(lon_model), body["interval_min"],
                          tuple(body["features"]) if body["features"] is not None else None,
                          body["window"], body["target_mode"])
    p.lon_model_ = lon_model
    p.lat_model_ = lat_model
    p.columns_ = np.asarray(body["columns"], dtype=np.int64)
    p.n_train_ = body["n_train"]
    if config_digest(p) != header["config_digest"]:
        raise ModelLoadError("configuration digest mismatch")
    return p
