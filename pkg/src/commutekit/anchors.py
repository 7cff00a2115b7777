"""Home and work anchor inference from merged cluster centers.

Home is the center seen on the most distinct days in the baseline window
(all days counted); work is the most frequent remaining center counted over
workdays only. Both gates are strict, matching the "greater than 17 days" /
"more than 10 days" thresholds.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .cluster import ClusterCenter
from .geo import AnalysisWindow, GeoPoint, DayKind, day_kind, local_day, Ping


@dataclass(frozen=True, slots=True)
class AnchorRules:
    min_home_days: int = 18
    min_work_days: int = 11
    presence_radius: float = 0.001  # degrees; same scale as the clustering eps

    def __post_init__(self) -> None:
        if not self.min_home_days > self.min_work_days >= 1:
            raise ValueError("need min_home_days > min_work_days >= 1")
        if self.presence_radius <= 0:
            raise ValueError("presence_radius must be > 0")


class AnchorRole(enum.Enum):
    HOME = "home"
    WORK = "work"


@dataclass(frozen=True, slots=True)
class AnchorPair:
    user_id: str
    home: GeoPoint
    home_days: int
    work: Optional[GeoPoint] = None
    work_days: Optional[int] = None


@dataclass(frozen=True, slots=True)
class PresenceSeries:
    """Distinct-day presence near one anchor within one window."""

    user_id: str
    anchor_role: AnchorRole
    window_label: str
    present_days: int
    present_workdays: int


def _pick_best(candidates: list[tuple[int, ClusterCenter]]) -> tuple[int, ClusterCenter] | None:
    # max day count, then max member count, then lexicographically smallest point
    if not candidates:
        return None
    return min(candidates, key=lambda t: (-t[0], -t[1].member_count, t[1].point.lat, t[1].point.lon))


def infer_home(
    centers: Sequence[ClusterCenter], rules: AnchorRules
) -> Optional[tuple[ClusterCenter, int]]:
    """Center present on the most days, if it clears the home-day gate."""
    best = _pick_best([(len(c.day_set), c) for c in centers])
    if best is None or best[0] < rules.min_home_days:
        return None
    return best[1], best[0]


def infer_work(
    centers: Sequence[ClusterCenter],
    home: ClusterCenter,
    rules: AnchorRules,
) -> Optional[tuple[ClusterCenter, int]]:
    """Most frequent workday center, ignoring home and anything home-coincident."""
    r_sq = rules.presence_radius * rules.presence_radius
    candidates: list[tuple[int, ClusterCenter]] = []
    for c in centers:
        if c is home:
            continue
        dlat = c.point.lat - home.point.lat
        dlon = c.point.lon - home.point.lon
        if dlat * dlat + dlon * dlon <= r_sq:
            continue  # within the home presence zone, treated as home-coincident
        workdays = sum(1 for d in c.day_set if day_kind(d) is DayKind.WORKDAY)
        candidates.append((workdays, c))
    best = _pick_best(candidates)
    if best is None or best[0] < rules.min_work_days:
        return None
    return best[1], best[0]


def presence_days(
    pings: Iterable[Ping], anchor: GeoPoint, radius: float, window: AnalysisWindow
) -> int:
    """Distinct local days with at least one ping within radius (degrees) of anchor."""
    r_sq = radius * radius
    alat, alon = anchor.lat, anchor.lon
    days = set()
    for p in pings:
        dlat = p.point.lat - alat
        dlon = p.point.lon - alon
        if dlat * dlat + dlon * dlon <= r_sq:
            days.add(local_day(p.timestamp, window.utc_offset_minutes))
    return len(days)


def workday_presence(
    pings: Iterable[Ping], anchor: GeoPoint, radius: float, window: AnalysisWindow
) -> int:
    """presence_days restricted to workdays."""
    r_sq = radius * radius
    alat, alon = anchor.lat, anchor.lon
    days = set()
    for p in pings:
        dlat = p.point.lat - alat
        dlon = p.point.lon - alon
        if dlat * dlat + dlon * dlon <= r_sq:
            d = local_day(p.timestamp, window.utc_offset_minutes)
            if day_kind(d) is DayKind.WORKDAY:
                days.add(d)
    return len(days)


def presence_series(
    pings: Iterable[Ping], pair: AnchorPair, radius: float, window: AnalysisWindow
) -> list[PresenceSeries]:
    """Home (and work, when present) presence for one user in one window."""
    pings = list(pings)
    out = [
        PresenceSeries(
            user_id=pair.user_id,
            anchor_role=AnchorRole.HOME,
            window_label=window.label,
            present_days=presence_days(pings, pair.home, radius, window),
            present_workdays=workday_presence(pings, pair.home, radius, window),
        )
    ]
    if pair.work is not None:
        out.append(
            PresenceSeries(
                user_id=pair.user_id,
                anchor_role=AnchorRole.WORK,
                window_label=window.label,
                present_days=presence_days(pings, pair.work, radius, window),
                present_workdays=workday_presence(pings, pair.work, radius, window),
            )
        )
    return out


# ---------------------------------------------------------------------------
# file formats


def write_anchors_csv(path: str, pairs: Iterable[AnchorPair]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["user_id", "home_lat", "home_lon", "home_days", "work_lat", "work_lon", "work_days"]
        )
        for pair in pairs:
            row = [pair.user_id, repr(pair.home.lat), repr(pair.home.lon), pair.home_days]
            if pair.work is not None:
                row += [repr(pair.work.lat), repr(pair.work.lon), pair.work_days]
            else:
                row += ["", "", ""]
            writer.writerow(row)


def read_anchors_csv(path: str) -> list[AnchorPair]:
    pairs = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            work = None
            work_days = None
            if row["work_lat"]:
                work = GeoPoint(float(row["work_lat"]), float(row["work_lon"]))
                work_days = int(row["work_days"])
            pairs.append(
                AnchorPair(
                    user_id=row["user_id"],
                    home=GeoPoint(float(row["home_lat"]), float(row["home_lon"])),
                    home_days=int(row["home_days"]),
                    work=work,
                    work_days=work_days,
                )
            )
    return pairs


def write_presence_csv(path: str, series: Iterable[PresenceSeries]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "window", "role", "present_days", "present_workdays"])
        for s in series:
            writer.writerow(
                [s.user_id, s.window_label, s.anchor_role.value, s.present_days, s.present_workdays]
            )


def read_presence_csv(path: str) -> list[PresenceSeries]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                PresenceSeries(
                    user_id=row["user_id"],
                    anchor_role=AnchorRole(row["role"]),
                    window_label=row["window"],
                    present_days=int(row["present_days"]),
                    present_workdays=int(row["present_workdays"]),
                )
            )
    return out


def anchors_feature_collection(pairs: Iterable[AnchorPair]) -> dict:
    """GeoJSON with home points, work points, and home-to-work connector lines."""
    features: list[dict] = []
    for pair in pairs:
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [pair.home.lon, pair.home.lat]},
                "properties": {"user_id": pair.user_id, "role": "home", "days": pair.home_days},
            }
        )
        if pair.work is None:
            continue
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [pair.work.lon, pair.work.lat]},
                "properties": {"user_id": pair.user_id, "role": "work", "days": pair.work_days},
            }
        )
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [
                        [pair.home.lon, pair.home.lat],
                        [pair.work.lon, pair.work.lat],
                    ],
                },
                "properties": {"user_id": pair.user_id, "role": "commute"},
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_anchors_geojson(path: str, pairs: Iterable[AnchorPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(anchors_feature_collection(pairs), fh, sort_keys=True, indent=2)
        fh.write("\n")
