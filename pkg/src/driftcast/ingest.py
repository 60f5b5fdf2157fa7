"""AIS position reports: CSV parsing, faulty-record filtering and per-vessel grouping.

The interchange format is a plain CSV with the exact header::

    mmsi,timestamp,lat,lon,sog,cog

and ISO-8601 UTC timestamps at second resolution, e.g.
``239923000,2014-11-01T00:00:07Z,37.94321,23.61002,11.3,187.0``.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Optional

from .geo import GeoPoint

HEADER = ("mmsi", "timestamp", "lat", "lon", "sog", "cog")

# AIS "not available" encodings
LAT_UNAVAILABLE = 91.0
LON_UNAVAILABLE = 181.0
COG_UNAVAILABLE = 360.0
SOG_UNAVAILABLE = 102.3
SOG_MAX = 102.2

# Aegean study region of the reference dataset: (lat_min, lat_max, lon_min, lon_max)
AEGEAN_BOX = (36.08462, 39.48708, 24.45557, 26.58691)

REASON_POSITION_UNAVAILABLE = "position unavailable"
REASON_SPEED_UNAVAILABLE = "speed unavailable"
REASON_COURSE_UNAVAILABLE = "course unavailable"
REASON_OUT_OF_RANGE = "out of range"
REASON_TOO_FAST = "speed above limit"
REASON_OUTSIDE_BOX = "outside bounding box"
REASON_DUPLICATE = "duplicate"


class SchemaError(ValueError):
    """The CSV header is missing or does not match the expected columns."""


@dataclass(frozen=True)
class ParseError:
    line: int
    reason: str


@dataclass(frozen=True)
class AisRecord:
    """One position report.

    Range invariants are *not* enforced on construction so that raw reports
    carrying AIS sentinels can reach `filter_records`; see `violations`.
    ``timestamp`` is UTC epoch seconds.
    """

    mmsi: int
    timestamp: int
    lat: float
    lon: float
    sog: float
    cog: float

    @property
    def position(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)

    @property
    def time(self) -> datetime:
        return datetime.fromtimestamp(self.timestamp, tz=timezone.utc)

    def violations(self) -> list[str]:
        out = []
        if not 100_000_000 <= self.mmsi <= 999_999_999:
            out.append("mmsi")
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            out.append("lat")
        if not (math.isfinite(self.lon) and -180.0 <= self.lon < 180.0):
            out.append("lon")
        if not (math.isfinite(self.sog) and 0.0 <= self.sog <= SOG_MAX):
            out.append("sog")
        if not (math.isfinite(self.cog) and 0.0 <= self.cog < 360.0):
            out.append("cog")
        return out

    def to_row(self) -> list[str]:
        return [str(self.mmsi), format_timestamp(self.timestamp),
                repr(self.lat), repr(self.lon), repr(self.sog), repr(self.cog)]


@dataclass(frozen=True)
class FilterRules:
    """Record filtering policy.

    ``bounding_box`` is ``(lat_min, lat_max, lon_min, lon_max)`` or None.
    """

    bounding_box: Optional[tuple[float, float, float, float]] = None
    max_sog: float = SOG_MAX
    drop_unavailable_markers: bool = True

    def __post_init__(self):
        if self.bounding_box is not None:
            lat_min, lat_max, lon_min, lon_max = self.bounding_box
            if not (lat_min < lat_max and lon_min < lon_max):
                raise ValueError(f"degenerate bounding box {self.bounding_box}")
            object.__setattr__(self, "bounding_box", tuple(float(v) for v in self.bounding_box))


@dataclass
class ParseResult:
    records: list[AisRecord] = field(default_factory=list)
    errors: list[ParseError] = field(default_factory=list)


def parse_timestamp(text: str) -> int:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch_s: int) -> str:
    return datetime.fromtimestamp(epoch_s, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _text_stream(stream) -> IO[str]:
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(stream.decode("utf-8"), newline="")
    if isinstance(stream.read(0), bytes):
        return io.TextIOWrapper(stream, encoding="utf-8", newline="")
    return stream


def parse_ais_csv(stream) -> ParseResult:
    """Parse AIS reports, collecting per-line failures instead of aborting.

    `stream` may be a text or binary file object, or raw bytes. Line numbers
    count the header as line 1.
    """
    reader = csv.reader(_text_stream(stream))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty input: missing header") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise SchemaError(f"unexpected header {header!r}; expected {','.join(HEADER)}")

    result = ParseResult()
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(HEADER):
            result.errors.append(ParseError(line_no, f"expected {len(HEADER)} fields, got {len(row)}"))
            continue
        try:
            mmsi = int(row[0])
        except ValueError:
            result.errors.append(ParseError(line_no, f"bad mmsi {row[0]!r}"))
            continue
        try:
            ts = parse_timestamp(row[1])
        except ValueError:
            result.errors.append(ParseError(line_no, f"bad timestamp {row[1]!r}"))
            continue
        values = []
        for name, text in zip(HEADER[2:], row[2:]):
            try:
                values.append(float(text))
            except ValueError:
                result.errors.append(ParseError(line_no, f"bad {name} {text!r}"))
                break
        else:
            result.records.append(AisRecord(mmsi, ts, *values))
    return result


def write_ais_csv(records: Iterable[AisRecord], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEADER)
    for rec in records:
        writer.writerow(rec.to_row())


def _drop_reason(rec: AisRecord, rules: FilterRules) -> Optional[str]:
    if rules.drop_unavailable_markers:
        if rec.lat == LAT_UNAVAILABLE or rec.lon == LON_UNAVAILABLE:
            return REASON_POSITION_UNAVAILABLE
        if rec.sog == SOG_UNAVAILABLE:
            return REASON_SPEED_UNAVAILABLE
        if rec.cog == COG_UNAVAILABLE:
            return REASON_COURSE_UNAVAILABLE
    if rec.violations():
        return REASON_OUT_OF_RANGE
    if rec.sog > rules.max_sog:
        return REASON_TOO_FAST
    if rules.bounding_box is not None:
        lat_min, lat_max, lon_min, lon_max = rules.bounding_box
        if not (lat_min <= rec.lat <= lat_max and lon_min <= rec.lon <= lon_max):
            return REASON_OUTSIDE_BOX
    return None


def filter_records(records: Iterable[AisRecord], rules: FilterRules = FilterRules()
                   ) -> tuple[list[AisRecord], Counter]:
    """Drop faulty, out-of-region and duplicate reports.

    Returns the kept records in input order and a Counter of drop reasons.
    Exact ``(mmsi, timestamp)`` duplicates keep the first occurrence.
    """
    kept: list[AisRecord] = []
    dropped: Counter = Counter()
    seen: set[tuple[int, int]] = set()
    for rec in records:
        reason = _drop_reason(rec, rules)
        if reason is None:
            key = (rec.mmsi, rec.timestamp)
            if key in seen:
                reason = REASON_DUPLICATE
            else:
                seen.add(key)
        if reason is None:
            kept.append(rec)
        else:
            dropped[reason] += 1
    return kept, dropped


def group_sort(records: Iterable[AisRecord]) -> dict[int, list[AisRecord]]:
    """Cluster reports by vessel, each stream sorted by time; keys ascend by MMSI."""
    streams: dict[int, list[AisRecord]] = {}
    for rec in records:
        streams.setdefault(rec.mmsi, []).append(rec)
    return {mmsi: sorted(streams[mmsi], key=lambda r: r.timestamp) for mmsi in sorted(streams)}


def merge_streams(streams: dict[int, list[AisRecord]]) -> list[AisRecord]:
    """Flatten vessel streams into one list ordered by (timestamp, mmsi)."""
    flat = [rec for stream in streams.values() for rec in stream]
    flat.sort(key=lambda r: (r.timestamp, r.mmsi))
    return flat
