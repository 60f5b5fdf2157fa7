"""Vessel position forecasting from AIS reports."""

from .geo import DEFAULT_EARTH, EarthModel, GeoPoint, dead_reckon, haversine_km

__version__ = "0.1.0"

__all__ = ["DEFAULT_EARTH", "EarthModel", "GeoPoint", "dead_reckon", "haversine_km", "__version__"]
