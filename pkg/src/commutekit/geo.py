"""Core geographic and temporal types shared by the whole pipeline."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """A WGS84 coordinate in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True, slots=True)
class Ping:
    """One timestamped location observation of one anonymized user."""

    user_id: str
    timestamp: int  # seconds since Unix epoch, UTC
    point: GeoPoint

    def __post_init__(self) -> None:
        if self.timestamp <= 0:
            raise ValueError(f"timestamp must be positive: {self.timestamp}")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned lat/lon box. Antimeridian-spanning boxes are unsupported."""

    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def __post_init__(self) -> None:
        if self.min_lat >= self.max_lat:
            raise ValueError("min_lat must be < max_lat")
        if self.min_lon >= self.max_lon:
            raise ValueError("min_lon must be < max_lon")


@dataclass(frozen=True, slots=True)
class AnalysisWindow:
    """A labeled calendar span with a fixed UTC offset for local-day conversion."""

    label: str
    start_day: date
    end_day: date
    utc_offset_minutes: int

    def __post_init__(self) -> None:
        if self.start_day > self.end_day:
            raise ValueError("start_day must be <= end_day")

    @property
    def length_days(self) -> int:
        return (self.end_day - self.start_day).days + 1

    def contains_day(self, day: date) -> bool:
        return self.start_day <= day <= self.end_day

    def days(self) -> list[date]:
        return [self.start_day + timedelta(days=i) for i in range(self.length_days)]


class DayKind(enum.Enum):
    WORKDAY = "workday"
    WEEKEND = "weekend"


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in kilometers."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    d_phi = math.radians(b.lat - a.lat)
    d_lambda = math.radians(b.lon - a.lon)
    h = math.sin(d_phi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(d_lambda / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def local_day(timestamp: int, offset_minutes: int) -> date:
    """Calendar date of a UTC instant after applying a fixed minute offset."""
    shifted = datetime.fromtimestamp(timestamp, tz=timezone.utc) + timedelta(minutes=offset_minutes)
    return shifted.date()


def day_kind(day: date) -> DayKind:
    """Saturday and Sunday are weekend; Monday through Friday are workdays."""
    return DayKind.WEEKEND if day.weekday() >= 5 else DayKind.WORKDAY


def in_bbox(p: GeoPoint, box: BoundingBox) -> bool:
    """Boundary-inclusive containment test."""
    return box.min_lat <= p.lat <= box.max_lat and box.min_lon <= p.lon <= box.max_lon
