"""Ping file parsing, study-area filtering, activity stats, and cohort selection.

Raw record formats are versioned here because the upstream vendor format is
out of scope: CsvV1 is ``user_id,timestamp,lat,lon`` (UTF-8, header optional),
JsonLines is one object per line with the same four keys.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Mapping

from .errors import ConfigError
from .geo import AnalysisWindow, BoundingBox, GeoPoint, Ping, in_bbox, local_day


class PingFormat(enum.Enum):
    CSV_V1 = "csv"
    JSONL = "jsonl"


@dataclass(frozen=True, slots=True)
class ParseError:
    """One malformed input line, reported without aborting the file."""

    line: int  # 1-based
    message: str


@dataclass(frozen=True, slots=True)
class UserActivity:
    user_id: str
    window_label: str
    active_days: int
    ping_count: int


@dataclass(frozen=True, slots=True)
class CohortCriteria:
    """Activity gates; strict readings of "greater than 24 days" and "more than 300 points"."""

    min_active_days_per_window: int = 25
    min_pings_baseline: int = 301
    baseline_window_label: str = "pre"

    def __post_init__(self) -> None:
        if self.min_active_days_per_window < 1 or self.min_pings_baseline < 1:
            raise ValueError("cohort thresholds must be >= 1")


def parse_pings(
    stream: IO[str] | Iterable[str],
    fmt: PingFormat,
    errors: list[ParseError] | None = None,
    has_header: bool = False,
) -> Iterator[Ping]:
    """Stream pings from a text source, collecting malformed lines as errors.

    Memory use is bounded by the largest single record; output order is input
    order. ``errors`` (when given) receives one entry per bad line, with
    1-based line numbers.

    Args:
        stream: open text file or any iterable of lines.
        fmt: record format of the source.
        errors: optional sink for recoverable parse errors.
        has_header: CsvV1 only; skip the first row.
    """
    sink = errors if errors is not None else []
    if fmt is PingFormat.CSV_V1:
        yield from _parse_csv(stream, sink, has_header)
    elif fmt is PingFormat.JSONL:
        yield from _parse_jsonl(stream, sink)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown format: {fmt}")


def _parse_csv(stream: IO[str] | Iterable[str], errors: list[ParseError], has_header: bool) -> Iterator[Ping]:
    reader = csv.reader(stream)
    for row in reader:
        line = reader.line_num
        if has_header and line == 1:
            continue
        if not row:
            continue
        if len(row) != 4:
            errors.append(ParseError(line, f"expected 4 columns, got {len(row)}"))
            continue
        try:
            yield _make_ping(row[0], int(row[1]), float(row[2]), float(row[3]))
        except ValueError as exc:
            errors.append(ParseError(line, str(exc)))


def _parse_jsonl(stream: IO[str] | Iterable[str], errors: list[ParseError]) -> Iterator[Ping]:
    for line_num, raw in enumerate(stream, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            yield _make_ping(
                obj["user_id"], int(obj["timestamp"]), float(obj["lat"]), float(obj["lon"])
            )
        except (ValueError, KeyError, TypeError) as exc:
            errors.append(ParseError(line_num, f"{type(exc).__name__}: {exc}"))


def _make_ping(user_id: str, timestamp: int, lat: float, lon: float) -> Ping:
    if not user_id:
        raise ValueError("empty user_id")
    return Ping(str(user_id), timestamp, GeoPoint(lat, lon))


def filter_pings(pings: Iterable[Ping], box: BoundingBox, window: AnalysisWindow) -> Iterator[Ping]:
    """Keep pings inside the box whose local day falls within the window."""
    for p in pings:
        if in_bbox(p.point, box) and window.contains_day(
            local_day(p.timestamp, window.utc_offset_minutes)
        ):
            yield p


def activity_stats(pings: Iterable[Ping], window: AnalysisWindow) -> dict[str, UserActivity]:
    """Per-user distinct active local days and ping counts within one window.

    Callers must pass pings already filtered to the window.
    """
    days: dict[str, set] = {}
    counts: dict[str, int] = {}
    for p in pings:
        d = local_day(p.timestamp, window.utc_offset_minutes)
        days.setdefault(p.user_id, set()).add(d)
        counts[p.user_id] = counts.get(p.user_id, 0) + 1
    return {
        uid: UserActivity(uid, window.label, len(days[uid]), counts[uid]) for uid in days
    }


def select_cohort(
    stats_by_window: Mapping[str, Mapping[str, UserActivity]],
    criteria: CohortCriteria,
) -> set[str]:
    """Users meeting the day threshold in every window and the ping floor in the baseline."""
    baseline = criteria.baseline_window_label
    if baseline not in stats_by_window:
        raise ConfigError(f"baseline window {baseline!r} has no activity stats")
    selected: set[str] = set()
    for uid, activity in stats_by_window[baseline].items():
        if activity.ping_count < criteria.min_pings_baseline:
            continue
        if all(
            uid in stats and stats[uid].active_days >= criteria.min_active_days_per_window
            for stats in stats_by_window.values()
        ):
            selected.add(uid)
    return selected


def write_pings_csv(path: str, pings: Iterable[Ping]) -> int:
    """Write pings in CsvV1; floats use round-trip repr. Returns record count."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for p in pings:
            writer.writerow([p.user_id, p.timestamp, repr(p.point.lat), repr(p.point.lon)])
            n += 1
    return n


def write_cohort_csv(
    path: str,
    cohort: Iterable[str],
    stats_by_window: Mapping[str, Mapping[str, UserActivity]],
    baseline_label: str,
) -> None:
    """Cohort listing: user_id, per-window active days, baseline ping count."""
    labels = list(stats_by_window)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id"] + [f"active_days_{lb}" for lb in labels] + ["baseline_pings"])
        for uid in sorted(cohort):
            row: list = [uid]
            for lb in labels:
                activity = stats_by_window[lb].get(uid)
                row.append(activity.active_days if activity else 0)
            base = stats_by_window[baseline_label].get(uid)
            row.append(base.ping_count if base else 0)
            writer.writerow(row)
