"""Workplace-name resolution: manual overrides, cache, remote service, POI db.

The remote tier is a generic reverse-geocoding HTTP GET endpoint configured by
base URL and response field paths, so tests (and offline runs) can point it at
a local stub or drop it entirely. All remote calls go through one rate
limiter; resolutions are cached under a quantized coordinate key.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import requests

from .geo import GeoPoint, haversine_km

logger = logging.getLogger(__name__)

_KM_PER_DEG_LAT = 110.0  # deliberately low so candidate windows over-cover


class ResolutionSource(enum.Enum):
    REMOTE_API = "remote_api"
    POI_DB = "poi_db"
    MANUAL_OVERRIDE = "manual_override"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True, slots=True)
class WorkplaceRecord:
    user_id: str
    anchor: GeoPoint
    name: str
    source: ResolutionSource
    category_hint: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.source is ResolutionSource.UNRESOLVED) != (self.name == ""):
            raise ValueError("name must be empty exactly when unresolved")


def quantize_key(p: GeoPoint) -> str:
    """Cache key with both coordinates rounded to 5 decimal places (~1.1 m)."""
    lat = f"{p.lat:.5f}"
    lon = f"{p.lon:.5f}"
    # avoid distinct "-0.00000" and "0.00000" keys
    if lat == "-0.00000":
        lat = "0.00000"
    if lon == "-0.00000":
        lon = "0.00000"
    return f"{lat},{lon}"


class GeocodeCache:
    """Append-only map from quantized key to (name, source), persisted as JSONL."""

    def __init__(self) -> None:
        self._entries: dict[str, tuple[str, ResolutionSource]] = {}
        self._new_keys: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str) -> "GeocodeCache":
        cache = cls()
        try:
            fh = open(path, encoding="utf-8")
        except FileNotFoundError:
            return cache
        with fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                cache._entries[obj["key"]] = (obj["name"], ResolutionSource(obj["source"]))
        return cache

    def get(self, key: str) -> Optional[tuple[str, ResolutionSource]]:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, name: str, source: ResolutionSource) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = (name, source)
            self._new_keys.append(key)

    def save(self, path: str) -> int:
        """Append records added this run; returns how many were written."""
        with self._lock:
            new = list(self._new_keys)
            self._new_keys.clear()
        if not new:
            return 0
        with open(path, "a", encoding="utf-8") as fh:
            for key in new:
                name, source = self._entries[key]
                fh.write(
                    json.dumps({"key": key, "name": name, "source": source.value}, sort_keys=True)
                    + "\n"
                )
        return len(new)

    def __len__(self) -> int:
        return len(self._entries)


class RateLimiter:
    """Serializes callers so consecutive acquisitions are min_interval apart."""

    def __init__(self, min_interval_s: float):
        self.min_interval_s = min_interval_s
        self._lock = threading.Lock()
        self._last: float | None = None

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            if self._last is not None:
                wait = self._last + self.min_interval_s - now
                if wait > 0:
                    time.sleep(wait)
            self._last = time.monotonic()


@dataclass(frozen=True, slots=True)
class RemoteEndpoint:
    """Reverse-geocoding service shape: GET base_url?lat=..&lon=..&format=json."""

    base_url: str
    name_field: str = "name"
    address_fields: tuple[str, ...] = ("amenity", "building", "shop")
    min_request_interval_s: float = 1.0
    timeout_s: float = 10.0


def extract_name(payload: object, endpoint: RemoteEndpoint) -> Optional[str]:
    """Most specific named component of a response, or None."""
    if not isinstance(payload, dict):
        return None
    name = payload.get(endpoint.name_field)
    if isinstance(name, str) and name.strip():
        return name.strip()
    address = payload.get("address")
    if isinstance(address, dict):
        for fld in endpoint.address_fields:
            value = address.get(fld)
            if isinstance(value, str) and value.strip():
                return value.strip()
    return None


def remote_reverse(
    anchor: GeoPoint,
    endpoint: RemoteEndpoint,
    limiter: RateLimiter,
    session: Optional[requests.Session] = None,
) -> Optional[str]:
    """One rate-limited reverse lookup; any failure degrades to None."""
    limiter.acquire()
    params = {"lat": repr(anchor.lat), "lon": repr(anchor.lon), "format": "json"}
    try:
        if session is not None:
            resp = session.get(endpoint.base_url, params=params, timeout=endpoint.timeout_s)
        else:
            resp = requests.get(endpoint.base_url, params=params, timeout=endpoint.timeout_s)
    except requests.RequestException as exc:
        logger.warning("reverse geocode request failed for %s: %s", quantize_key(anchor), exc)
        return None
    if not 200 <= resp.status_code < 300:
        logger.warning(
            "reverse geocode returned %s for %s", resp.status_code, quantize_key(anchor)
        )
        return None
    try:
        payload = resp.json()
    except ValueError as exc:
        logger.warning("malformed reverse geocode response for %s: %s", quantize_key(anchor), exc)
        return None
    return extract_name(payload, endpoint)


@dataclass(frozen=True, slots=True)
class PoiEntry:
    name: str
    point: GeoPoint
    category_hint: Optional[str] = None


class PoiDb:
    """Offline point-of-interest catalog with a coarse grid for radius lookups."""

    _CELL_DEG = 0.01

    def __init__(self, entries: Iterable[PoiEntry]):
        self.entries = list(entries)
        for e in self.entries:
            if not e.name:
                raise ValueError("POI names must be nonempty")
        self._cells: dict[tuple[int, int], list[int]] = {}
        for i, e in enumerate(self.entries):
            key = (
                math.floor(e.point.lat / self._CELL_DEG),
                math.floor(e.point.lon / self._CELL_DEG),
            )
            self._cells.setdefault(key, []).append(i)

    @classmethod
    def load_csv(cls, path: str) -> "PoiDb":
        """CSV with header name,lat,lon,category_hint (hint may be empty)."""
        entries = []
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                entries.append(
                    PoiEntry(
                        name=row["name"],
                        point=GeoPoint(float(row["lat"]), float(row["lon"])),
                        category_hint=row.get("category_hint") or None,
                    )
                )
        return cls(entries)

    def nearest(self, anchor: GeoPoint, max_radius_m: float) -> Optional[PoiEntry]:
        radius_km = max_radius_m / 1000.0
        dlat = radius_km / _KM_PER_DEG_LAT
        cos_lat = max(0.05, math.cos(math.radians(anchor.lat)))
        dlon = radius_km / (_KM_PER_DEG_LAT * cos_lat)
        cell = self._CELL_DEG
        lo_i = math.floor((anchor.lat - dlat) / cell)
        hi_i = math.floor((anchor.lat + dlat) / cell)
        lo_j = math.floor((anchor.lon - dlon) / cell)
        hi_j = math.floor((anchor.lon + dlon) / cell)
        best: tuple[float, str, PoiEntry] | None = None
        for i in range(lo_i, hi_i + 1):
            for j in range(lo_j, hi_j + 1):
                for idx in self._cells.get((i, j), ()):
                    entry = self.entries[idx]
                    dist_km = haversine_km(anchor, entry.point)
                    if dist_km * 1000.0 > max_radius_m:
                        continue
                    key = (dist_km, entry.name, entry)
                    if best is None or key[:2] < best[:2]:
                        best = key
        return best[2] if best else None


def poi_nearest(
    db: PoiDb, anchor: GeoPoint, max_radius_m: float
) -> Optional[tuple[str, Optional[str]]]:
    """Closest named POI within the radius; equidistant ties pick the smaller name."""
    entry = db.nearest(anchor, max_radius_m)
    if entry is None:
        return None
    return entry.name, entry.category_hint


@dataclass
class GeocodeCascade:
    """Tiered resolution config: overrides, then cache, then remote, then POI."""

    overrides: Mapping[str, str] = field(default_factory=dict)
    cache: GeocodeCache = field(default_factory=GeocodeCache)
    endpoint: Optional[RemoteEndpoint] = None
    poi: Optional[PoiDb] = None
    max_poi_radius_m: float = 100.0
    session: Optional[requests.Session] = None

    def __post_init__(self) -> None:
        interval = self.endpoint.min_request_interval_s if self.endpoint else 0.0
        self._limiter = RateLimiter(interval)


def load_overrides_tsv(path: str) -> dict[str, str]:
    """Manual override file: tab-separated lat, lon, name."""
    overrides: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh, delimiter="\t"):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 3:
                raise ValueError(f"override rows need 3 fields, got {len(row)}")
            lat, lon, name = row
            overrides[quantize_key(GeoPoint(float(lat), float(lon)))] = name
    return overrides


def resolve(anchor: GeoPoint, cascade: GeocodeCascade, user_id: str = "") -> WorkplaceRecord:
    """Resolve one anchor to a workplace record; never drops an anchor.

    Tier order: manual override, cache, remote service, POI nearest-neighbor.
    The first nonempty name wins and the outcome (including a miss) is cached.
    """
    key = quantize_key(anchor)

    name = cascade.overrides.get(key)
    if name:
        cascade.cache.put(key, name, ResolutionSource.MANUAL_OVERRIDE)
        return WorkplaceRecord(user_id, anchor, name, ResolutionSource.MANUAL_OVERRIDE)

    cached = cascade.cache.get(key)
    if cached is not None:
        name, source = cached
        hint = None
        if source is ResolutionSource.POI_DB and cascade.poi is not None:
            # hint is not part of the cache schema; re-derive it locally
            hit = poi_nearest(cascade.poi, anchor, cascade.max_poi_radius_m)
            if hit is not None and hit[0] == name:
                hint = hit[1]
        return WorkplaceRecord(user_id, anchor, name, source, category_hint=hint)

    if cascade.endpoint is not None:
        name = remote_reverse(anchor, cascade.endpoint, cascade._limiter, cascade.session)
        if name:
            cascade.cache.put(key, name, ResolutionSource.REMOTE_API)
            return WorkplaceRecord(user_id, anchor, name, ResolutionSource.REMOTE_API)

    if cascade.poi is not None:
        hit = poi_nearest(cascade.poi, anchor, cascade.max_poi_radius_m)
        if hit is not None:
            name, hint = hit
            cascade.cache.put(key, name, ResolutionSource.POI_DB)
            return WorkplaceRecord(user_id, anchor, name, ResolutionSource.POI_DB, category_hint=hint)

    cascade.cache.put(key, "", ResolutionSource.UNRESOLVED)
    return WorkplaceRecord(user_id, anchor, "", ResolutionSource.UNRESOLVED)
