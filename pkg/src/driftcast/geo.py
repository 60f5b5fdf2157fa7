"""Spherical geodesy: great-circle distance and dead-reckoning projection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KM_PER_NM = 1.852
MEAN_EARTH_RADIUS_KM = 6371.0088


class InvalidCoordinateError(ValueError):
    """Raised for non-finite or out-of-range coordinates and motion values."""


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidCoordinateError(f"non-finite value: {v!r}")


@dataclass(frozen=True)
class EarthModel:
    radius_km: float = MEAN_EARTH_RADIUS_KM

    def __post_init__(self):
        if not (math.isfinite(self.radius_km) and self.radius_km > 0):
            raise InvalidCoordinateError(f"earth radius must be positive, got {self.radius_km!r}")


DEFAULT_EARTH = EarthModel()


@dataclass(frozen=True)
class GeoPoint:
    """A latitude/longitude position in degrees.

    Longitude is kept in [-180, 180); a value of exactly +180 is folded to -180.
    """

    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        _finite(self.lat_deg, self.lon_deg)
        if not -90.0 <= self.lat_deg <= 90.0:
            raise InvalidCoordinateError(f"latitude out of range: {self.lat_deg}")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise InvalidCoordinateError(f"longitude out of range: {self.lon_deg}")
        if self.lon_deg == 180.0:
            object.__setattr__(self, "lon_deg", -180.0)


def normalize_lon(lon_deg: float) -> float:
    """Wrap a longitude into [-180, 180)."""
    _finite(lon_deg)
    out = (lon_deg + 180.0) % 360.0 - 180.0
    # fmod rounding can land exactly on +180 for tiny negative inputs
    if out >= 180.0:
        out -= 360.0
    return out


def normalize_lon_array(lon_deg: np.ndarray) -> np.ndarray:
    out = np.mod(np.asarray(lon_deg, dtype=float) + 180.0, 360.0) - 180.0
    return np.where(out >= 180.0, out - 360.0, out)


def haversine_km(a: GeoPoint, b: GeoPoint, earth: EarthModel = DEFAULT_EARTH) -> float:
    """Great-circle distance between two points in kilometres."""
    _finite(a.lat_deg, a.lon_deg, b.lat_deg, b.lon_deg)
    lat1 = math.radians(a.lat_deg)
    lat2 = math.radians(b.lat_deg)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    h = min(max(h, 0.0), 1.0)
    return 2.0 * earth.radius_km * math.asin(math.sqrt(h))


def haversine_km_array(lat1, lon1, lat2, lon2, earth: EarthModel = DEFAULT_EARTH) -> np.ndarray:
    """Vectorised haversine over degree arrays; same formula as `haversine_km`."""
    lat1 = np.radians(np.asarray(lat1, dtype=float))
    lat2 = np.radians(np.asarray(lat2, dtype=float))
    dlat = lat2 - lat1
    dlon = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    h = np.clip(h, 0.0, 1.0)
    return 2.0 * earth.radius_km * np.arcsin(np.sqrt(h))


def _check_motion(sog_knots: float, cog_deg: float, minutes: float) -> None:
    _finite(sog_knots, cog_deg, minutes)
    if sog_knots < 0:
        raise InvalidCoordinateError(f"speed must be non-negative, got {sog_knots}")
    if not 0.0 <= cog_deg < 360.0:
        raise InvalidCoordinateError(f"course must be in [0, 360), got {cog_deg}")
    if minutes <= 0:
        raise InvalidCoordinateError(f"interval must be positive, got {minutes}")


def destination(start: GeoPoint, bearing_deg: float, distance_km: float,
                earth: EarthModel = DEFAULT_EARTH) -> GeoPoint:
    """Point reached by travelling `distance_km` along the great circle with initial `bearing_deg`."""
    _finite(bearing_deg, distance_km)
    if distance_km == 0.0:
        return start
    delta = distance_km / earth.radius_km
    theta = math.radians(bearing_deg)
    lat1 = math.radians(start.lat_deg)
    lon1 = math.radians(start.lon_deg)
    sin_lat2 = math.sin(lat1) * math.cos(delta) + math.cos(lat1) * math.sin(delta) * math.cos(theta)
    # cos(lat2) * (cos(dlon), sin(dlon)); atan2 keeps lat2 well conditioned near the poles
    along = math.cos(lat1) * math.cos(delta) - math.sin(lat1) * math.sin(delta) * math.cos(theta)
    across = math.sin(theta) * math.sin(delta)
    lat2 = math.atan2(sin_lat2, math.hypot(along, across))
    lon2 = lon1 + math.atan2(across, along)
    return GeoPoint(math.degrees(lat2), normalize_lon(math.degrees(lon2)))


def dead_reckon(start: GeoPoint, sog_knots: float, cog_deg: float, minutes: float,
                earth: EarthModel = DEFAULT_EARTH) -> GeoPoint:
    """Project a position forward at constant speed and initial course.

    The vessel covers ``sog * minutes / 60`` nautical miles along the great
    circle leaving `start` on bearing `cog_deg`.
    """
    _check_motion(sog_knots, cog_deg, minutes)
    distance_km = sog_knots * (minutes / 60.0) * KM_PER_NM
    return destination(start, cog_deg, distance_km, earth)


def dead_reckon_array(lat, lon, sog_knots, cog_deg, minutes, earth: EarthModel = DEFAULT_EARTH):
    """Vectorised `dead_reckon`; returns ``(lat, lon)`` arrays in degrees. No validation."""
    lat1 = np.radians(np.asarray(lat, dtype=float))
    lon1 = np.radians(np.asarray(lon, dtype=float))
    theta = np.radians(np.asarray(cog_deg, dtype=float))
    delta = np.asarray(sog_knots, dtype=float) * (np.asarray(minutes, dtype=float) / 60.0) * KM_PER_NM
    delta = delta / earth.radius_km
    sin_lat2 = np.sin(lat1) * np.cos(delta) + np.cos(lat1) * np.sin(delta) * np.cos(theta)
    along = np.cos(lat1) * np.cos(delta) - np.sin(lat1) * np.sin(delta) * np.cos(theta)
    across = np.sin(theta) * np.sin(delta)
    lat2 = np.arctan2(sin_lat2, np.hypot(along, across))
    lon2 = lon1 + np.arctan2(across, along)
    return np.degrees(lat2), normalize_lon_array(np.degrees(lon2))


def wrap_course(deg: float) -> float:
    """Wrap an angle into [0, 360)."""
    out = deg % 360.0
    return 0.0 if out >= 360.0 else out


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from `a` to `b`, degrees in [0, 360)."""
    lat1, lat2 = math.radians(a.lat_deg), math.radians(b.lat_deg)
    dlon = math.radians(b.lon_deg - a.lon_deg)
    y = math.sin(dlon) * math.cos(lat2)
    x = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    return wrap_course(math.degrees(math.atan2(y, x)))


def final_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Bearing on arrival at `b` when travelling the great circle from `a`."""
    return wrap_course(initial_bearing(b, a) + 180.0)


def travel(start: GeoPoint, bearing_deg: float, distance_km: float,
           earth: EarthModel = DEFAULT_EARTH) -> tuple[GeoPoint, float]:
    """Like `destination`, also returning the great-circle bearing on arrival."""
    end = destination(start, bearing_deg, distance_km, earth)
    if distance_km == 0.0:
        return end, wrap_course(bearing_deg)
    delta = distance_km / earth.radius_km
    theta = math.radians(bearing_deg)
    lat1 = math.radians(start.lat_deg)
    y = math.sin(theta) * math.cos(lat1)
    x = math.cos(delta) * math.cos(lat1) * math.cos(theta) - math.sin(lat1) * math.sin(delta)
    return end, wrap_course(math.degrees(math.atan2(y, x)))
