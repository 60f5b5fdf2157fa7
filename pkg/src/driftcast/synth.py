"""Synthetic AIS fleets with known ground-truth motion.

Vessels move on the sphere under one of three regimes:

* ``constant-velocity``: great-circle track at fixed speed. The reported
  course is the instantaneous great-circle bearing, so dead reckoning from
  any noise-free report is exact.
* ``constant-turn``: circular arc at fixed speed and turn rate (deg/min,
  positive turns to starboard).
* ``speed-ramp``: great-circle track whose speed ramps at a fixed rate
  (knots/min), bouncing between the regime's speed bounds.

Reported positions carry isotropic Gaussian noise; reported speed and
course are the true instantaneous values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geo import KM_PER_NM, MEAN_EARTH_RADIUS_KM, GeoPoint, normalize_lon, travel, wrap_course
from .ingest import AEGEAN_BOX, AisRecord, SOG_MAX, parse_timestamp

REGIME_KINDS = ("constant-velocity", "constant-turn", "speed-ramp")
DEFAULT_START = parse_timestamp("2014-11-01T00:00:00Z")


class EmptyConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Regime:
    kind: str = "constant-velocity"
    weight: float = 1.0
    rate: float = 0.0
    speed_range: tuple[float, float] = (8.0, 18.0)
    course_range: tuple[float, float] = (0.0, 360.0)

    def __post_init__(self):
        if self.kind not in REGIME_KINDS:
            raise ValueError(f"unknown regime {self.kind!r}; expected one of {REGIME_KINDS}")
        if self.weight < 0:
            raise ValueError("regime weight must be non-negative")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi <= SOG_MAX:
            raise ValueError(f"bad speed range {self.speed_range}")
        c_lo, c_hi = self.course_range
        if not 0 <= c_lo <= c_hi <= 360:
            raise ValueError(f"bad course range {self.course_range}")
        object.__setattr__(self, "speed_range", (float(lo), float(hi)))
        object.__setattr__(self, "course_range", (float(c_lo), float(c_hi)))


@dataclass(frozen=True)
class FleetConfig:
    n_vessels: int = 10
    duration_min: float = 60.0
    emission_interval_s: tuple[int, int] = (3, 30)
    regimes: tuple[Regime, ...] = (Regime(),)
    position_noise_m: float = 0.0
    seed: int = 0
    start_box: tuple[float, float, float, float] = AEGEAN_BOX
    start_time: int = DEFAULT_START
    mmsi_base: int = 237_000_000

    def __post_init__(self):
        lo, hi = self.emission_interval_s
        if not 3 <= lo <= hi:
            raise ValueError(f"emission interval must satisfy 3 <= min <= max, got {self.emission_interval_s}")
        if not self.regimes or sum(r.weight for r in self.regimes) <= 0:
            raise ValueError("regime weights must have a positive sum")
        if self.position_noise_m < 0:
            raise ValueError("position noise must be non-negative")
        object.__setattr__(self, "regimes", tuple(self.regimes))


def allocate_regimes(n: int, regimes: tuple[Regime, ...]) -> list[Regime]:
    """Split `n` vessels across regimes in proportion to their weights (largest remainder)."""
    weights = np.array([r.weight for r in regimes], dtype=float)
    quota = n * weights / weights.sum()
    counts = np.floor(quota).astype(int)
    for i in np.argsort(-(quota - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    return [r for r, c in zip(regimes, counts) for _ in range(c)]


@dataclass
class _VesselState:
    position: GeoPoint
    speed: float
    course: float
    ramp_sign: float = 1.0
    regime: Regime = field(default_factory=Regime)


def _advance(state: _VesselState, dt_s: float) -> None:
    kind = state.regime.kind
    if kind == "constant-velocity" or (kind == "constant-turn" and state.regime.rate == 0.0):
        dist = state.speed * KM_PER_NM * dt_s / 3600.0
        state.position, state.course = travel(state.position, state.course, dist)
    elif kind == "constant-turn":
        omega = math.radians(state.regime.rate) / 60.0  # rad/s
        phi = omega * dt_s
        radius = state.speed * KM_PER_NM / 3600.0 / abs(omega)
        chord = 2.0 * radius * abs(math.sin(phi / 2.0))
        half_turn = math.degrees(phi / 2.0)
        state.position, arrive = travel(state.position, wrap_course(state.course + half_turn), chord)
        state.course = wrap_course(arrive + half_turn)
    else:
        lo, hi = state.regime.speed_range
        rate = abs(state.regime.rate) / 60.0  # knots per second
        remaining = dt_s
        dist = 0.0
        while remaining > 0:
            if rate == 0.0 or lo == hi:
                step, v1 = remaining, state.speed
            else:
                bound = hi if state.ramp_sign > 0 else lo
                to_bound = abs(bound - state.speed) / rate
                step = min(remaining, to_bound)
                v1 = state.speed + state.ramp_sign * rate * step
                if step == to_bound:
                    v1 = bound
                    state.ramp_sign = -state.ramp_sign
            dist += 0.5 * (state.speed + v1) * step
            state.speed = v1
            remaining -= step
        state.position, state.course = travel(state.position, state.course, dist * KM_PER_NM / 3600.0)


def _jitter(p: GeoPoint, rng: np.random.Generator, sigma_m: float) -> GeoPoint:
    if sigma_m == 0.0:
        return p
    north, east = rng.normal(0.0, sigma_m, size=2) / 1000.0
    r = MEAN_EARTH_RADIUS_KM
    lat = p.lat_deg + math.degrees(north / r)
    lon = p.lon_deg + math.degrees(east / (r * math.cos(math.radians(p.lat_deg))))
    return GeoPoint(min(max(lat, -90.0), 90.0), normalize_lon(lon))


def _generate_vessel(config: FleetConfig, index: int, regime: Regime,
                     rng: np.random.Generator) -> list[AisRecord]:
    lat_min, lat_max, lon_min, lon_max = config.start_box
    start = GeoPoint(rng.uniform(lat_min, lat_max), rng.uniform(lon_min, lon_max))
    speed = float(rng.uniform(*regime.speed_range))
    course = wrap_course(float(rng.uniform(*regime.course_range)))
    state = _VesselState(start, speed, course, ramp_sign=1.0 if rng.random() < 0.5 else -1.0,
                         regime=regime)
    lo, hi = config.emission_interval_s
    end_t = config.start_time + int(round(config.duration_min * 60))
    t = config.start_time + int(rng.integers(0, hi + 1))
    mmsi = config.mmsi_base + index
    out = []
    while t <= end_t:
        pos = _jitter(state.position, rng, config.position_noise_m)
        out.append(AisRecord(mmsi, t, pos.lat_deg, pos.lon_deg, min(state.speed, SOG_MAX), state.course))
        gap = int(rng.integers(lo, hi + 1))
        _advance(state, gap)
        t += gap
    return out


def generate_fleet(config: FleetConfig) -> list[AisRecord]:
    """Simulate a fleet; records are ordered by (timestamp, mmsi).

    Each vessel draws from its own child seed, so output is a pure function
    of `config`.
    """
    if config.n_vessels <= 0 or config.duration_min <= 0:
        raise EmptyConfigError("fleet needs at least one vessel and a positive duration")
    root = np.random.SeedSequence(config.seed)
    order_rng = np.random.default_rng(root.spawn(1)[0])
    regimes = allocate_regimes(config.n_vessels, config.regimes)
    order_rng.shuffle(regimes)
    vessel_seeds = root.spawn(config.n_vessels)
    records = []
    for i, (regime, seed) in enumerate(zip(regimes, vessel_seeds)):
        records.extend(_generate_vessel(config, i, regime, np.random.default_rng(seed)))
    records.sort(key=lambda r: (r.timestamp, r.mmsi))
    return records
