"""Density clustering over geographic points in raw degree space.

Distances here are Euclidean in (lat, lon) degrees on purpose: the tuned
neighborhood radius is a plain degree value, so the metric must match the
space it was tuned in. Great-circle distance is only used for reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import Sequence

from .geo import DayKind, GeoPoint

NOISE = -1

# Grid cells are slightly wider than the query radius so that two points at
# distance exactly eps can never land more than one cell apart, even when the
# floor() at a cell boundary rounds against us.
_CELL_SLACK = 1.0 + 1e-6


@dataclass(frozen=True, slots=True)
class DbscanParams:
    eps: float = 0.001
    min_pts_fraction: float = 0.05
    min_pts_floor: int = 5

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if not 0 < self.min_pts_fraction <= 1:
            raise ValueError("min_pts_fraction must be in (0, 1]")
        if self.min_pts_floor < 1:
            raise ValueError("min_pts_floor must be >= 1")

    def effective_min_pts(self, n: int) -> int:
        # round() guards against float dust like 0.05 * 200 -> 10.000000000000002
        return max(self.min_pts_floor, math.ceil(round(self.min_pts_fraction * n, 9)))


@dataclass(frozen=True, slots=True)
class ClusterResult:
    labels: tuple[int, ...]  # cluster index >= 0, or NOISE
    cluster_count: int


@dataclass(frozen=True, slots=True)
class ClusterCenter:
    """Arithmetic centroid of one cluster with its day-presence evidence."""

    point: GeoPoint
    member_count: int
    day_set: frozenset[date]
    day_kind_source: DayKind


class GridIndex:
    """Uniform-grid spatial index over points for radius queries in degrees."""

    def __init__(self, points: Sequence[GeoPoint], cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        self.cell_size = cell_size
        self._lats = [p.lat for p in points]
        self._lons = [p.lon for p in points]
        cells: dict[tuple[int, int], list[int]] = {}
        floor = math.floor
        for i in range(len(points)):
            key = (floor(self._lats[i] / cell_size), floor(self._lons[i] / cell_size))
            cells.setdefault(key, []).append(i)
        self._cells = cells

    def query(self, q: GeoPoint, eps: float) -> list[int]:
        """Indices of all points within eps of q, boundary inclusive."""
        if eps > self.cell_size:
            raise ValueError("query radius exceeds index cell size")
        cs = self.cell_size
        lats = self._lats
        lons = self._lons
        cells = self._cells
        qlat, qlon = q.lat, q.lon
        ci = math.floor(qlat / cs)
        cj = math.floor(qlon / cs)
        eps_sq = eps * eps
        hits: list[int] = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                bucket = cells.get((ci + di, cj + dj))
                if not bucket:
                    continue
                for idx in bucket:
                    dlat = lats[idx] - qlat
                    dlon = lons[idx] - qlon
                    if dlat * dlat + dlon * dlon <= eps_sq:
                        hits.append(idx)
        return hits


def region_query(index: GridIndex, q: GeoPoint, eps: float) -> list[int]:
    """All point indices within eps of q. The index cell size must be >= eps."""
    return index.query(q, eps)


def dbscan(points: Sequence[GeoPoint], params: DbscanParams) -> ClusterResult:
    """Standard density clustering with deterministic input-order scanning.

    A point is core when at least min_pts points (itself included) lie within
    eps. Border points go to the first cluster that reaches them in scan
    order; everything else is noise. Raises ValueError on empty input.
    """
    if not points:
        raise ValueError("dbscan requires at least one point")
    n = len(points)
    min_pts = params.effective_min_pts(n)
    eps = params.eps
    index = GridIndex(points, cell_size=eps * _CELL_SLACK)

    labels: list[int | None] = [None] * n
    cluster_id = 0
    for i in range(n):
        if labels[i] is not None:
            continue
        neighbors = index.query(points[i], eps)
        if len(neighbors) < min_pts:
            labels[i] = NOISE
            continue
        # Grow a new cluster from this core point; the seed list acts as a
        # FIFO queue and expands whenever another core point is reached.
        labels[i] = cluster_id
        queue = list(neighbors)
        qi = 0
        while qi < len(queue):
            j = queue[qi]
            qi += 1
            lj = labels[j]
            if lj == NOISE:
                labels[j] = cluster_id  # border point, reclaimed from noise
            elif lj is None:
                labels[j] = cluster_id
                j_neighbors = index.query(points[j], eps)
                if len(j_neighbors) >= min_pts:
                    queue.extend(j_neighbors)
        cluster_id += 1

    return ClusterResult(labels=tuple(labels), cluster_count=cluster_id)  # type: ignore[arg-type]


def cluster_centers(
    points: Sequence[GeoPoint],
    result: ClusterResult,
    day_of: Sequence[date],
    kind: DayKind,
) -> list[ClusterCenter]:
    """Centroid, member count, and distinct member dates for every cluster."""
    if len(day_of) != len(points):
        raise ValueError("day_of must align with points")
    sums: list[list[float]] = [[0.0, 0.0, 0] for _ in range(result.cluster_count)]
    days: list[set[date]] = [set() for _ in range(result.cluster_count)]
    for idx, label in enumerate(result.labels):
        if label == NOISE:
            continue
        acc = sums[label]
        acc[0] += points[idx].lat
        acc[1] += points[idx].lon
        acc[2] += 1
        days[label].add(day_of[idx])
    centers = []
    for label in range(result.cluster_count):
        lat_sum, lon_sum, count = sums[label]
        centers.append(
            ClusterCenter(
                point=GeoPoint(lat_sum / count, lon_sum / count),
                member_count=int(count),
                day_set=frozenset(days[label]),
                day_kind_source=kind,
            )
        )
    return centers


def merge_centers(centers: Sequence[ClusterCenter], radius: float) -> list[ClusterCenter]:
    """Greedy larger-first merge of near-duplicate centers.

    Centers are visited in descending member_count (ties: lat, lon). A center
    within radius of an already-accepted one is absorbed into the first such
    acceptor: day sets union, member counts add, the acceptor keeps its point.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    radius_sq = radius * radius
    order = sorted(centers, key=lambda c: (-c.member_count, c.point.lat, c.point.lon))
    accepted: list[ClusterCenter] = []
    for center in order:
        target = None
        for i, acc in enumerate(accepted):
            dlat = acc.point.lat - center.point.lat
            dlon = acc.point.lon - center.point.lon
            if dlat * dlat + dlon * dlon <= radius_sq:
                target = i
                break
        if target is None:
            accepted.append(center)
        else:
            acc = accepted[target]
            accepted[target] = ClusterCenter(
                point=acc.point,
                member_count=acc.member_count + center.member_count,
                day_set=acc.day_set | center.day_set,
                day_kind_source=acc.day_kind_source,
            )
    return accepted
