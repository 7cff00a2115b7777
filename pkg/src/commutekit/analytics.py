"""Result tables and figure data: category counts, workday quantiles,
home-to-work distance distribution, and in-person expectation comparison.

Quantiles are nearest-rank (1-based index ceil(p*n) into the sorted values),
which keeps every reported quartile an actual observed integer day count.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from . import __version__
from .anchors import AnchorPair, write_anchors_geojson
from .categorize import Category
from .geo import haversine_km

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class CategoryWorkdayStats:
    category: Category
    window_label: str
    q25: int
    q50: int
    q75: int
    user_count: int


@dataclass(frozen=True, slots=True)
class DistanceSummary:
    min_km: float
    median_km: float
    max_km: float


@dataclass(frozen=True, slots=True)
class DistanceHistogram:
    bin_width_km: float
    counts: tuple[int, ...]  # bin k covers [k*w, (k+1)*w)
    summary: Optional[DistanceSummary]

    @property
    def bin_edges(self) -> list[float]:
        return [k * self.bin_width_km for k in range(len(self.counts) + 1)]


@dataclass(frozen=True, slots=True)
class NaicsComparison:
    category: Category
    window_label: str
    actual_pct: float
    expected_pct: float
    relative_shortfall: Optional[float]  # None when expected_pct == 0


def nearest_rank(sorted_values: Sequence, p: float):
    """Value at 1-based index ceil(p*n) of an ascending sequence."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("nearest_rank needs at least one value")
    idx = max(1, math.ceil(p * n))
    return sorted_values[idx - 1]


def category_counts(categories: Iterable[Category]) -> dict[Category, int]:
    """User tally per category; every category key is present."""
    counts = Counter(categories)
    return {cat: counts.get(cat, 0) for cat in Category}


def workday_quantiles(
    groups: Mapping[tuple[Category, str], Sequence[int]],
) -> list[CategoryWorkdayStats]:
    """Nearest-rank quartiles of per-user workday counts for each nonempty group."""
    rows = []
    for (category, window_label), values in groups.items():
        if not values:
            continue
        ordered = sorted(values)
        rows.append(
            CategoryWorkdayStats(
                category=category,
                window_label=window_label,
                q25=nearest_rank(ordered, 0.25),
                q50=nearest_rank(ordered, 0.50),
                q75=nearest_rank(ordered, 0.75),
                user_count=len(ordered),
            )
        )
    return rows


def distance_distribution(pairs: Iterable[AnchorPair], bin_width_km: float) -> DistanceHistogram:
    """Home-to-work great-circle distances binned into [k*w, (k+1)*w)."""
    if bin_width_km <= 0:
        raise ValueError("bin_width_km must be > 0")
    distances = sorted(
        haversine_km(pair.home, pair.work) for pair in pairs if pair.work is not None
    )
    if not distances:
        return DistanceHistogram(bin_width_km, (), None)
    n_bins = int(distances[-1] // bin_width_km) + 1
    counts = [0] * n_bins
    for d in distances:
        counts[int(d // bin_width_km)] += 1
    summary = DistanceSummary(
        min_km=distances[0],
        median_km=nearest_rank(distances, 0.5),
        max_km=distances[-1],
    )
    return DistanceHistogram(bin_width_km, tuple(counts), summary)


def load_naics_expectations(path: str) -> dict[Category, float]:
    """JSON object mapping category name to expected in-person percentage."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    out = {}
    for name, pct in raw.items():
        pct = float(pct)
        if not 0.0 <= pct <= 100.0:
            raise ValueError(f"expected percentage out of range for {name}: {pct}")
        out[Category(name)] = pct
    return out


def naics_comparison(
    stats: Iterable[CategoryWorkdayStats],
    expectations: Mapping[Category, float],
    workdays_by_window: Mapping[str, int],
) -> list[NaicsComparison]:
    """Median in-person share vs configured expectation, per category and window.

    relative_shortfall = 1 - actual/expected, clamped to [0, 1]; rows whose
    category has no configured expectation are dropped with a warning.
    """
    rows = []
    for st in stats:
        expected = expectations.get(st.category)
        if expected is None:
            logger.warning("no in-person expectation configured for %s", st.category.value)
            continue
        workdays = workdays_by_window[st.window_label]
        actual = 100.0 * st.q50 / workdays
        if expected == 0.0:
            shortfall = None
        else:
            shortfall = min(1.0, max(0.0, 1.0 - actual / expected))
        rows.append(NaicsComparison(st.category, st.window_label, actual, expected, shortfall))
    return rows


# ---------------------------------------------------------------------------
# report emission (all outputs byte-deterministic for identical inputs)


def _category_order(cat: Category) -> int:
    return list(Category).index(cat)


def write_category_counts_csv(path: str, counts: Mapping[Category, int]) -> None:
    lines = ["category,count"]
    for cat in Category:
        if counts.get(cat, 0) > 0:
            lines.append(f"{cat.value},{counts[cat]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_workday_stats_csv(
    path: str, rows: Iterable[CategoryWorkdayStats], window_labels: Sequence[str]
) -> None:
    """One row per category; three quantile columns per window."""
    by_key = {(r.category, r.window_label): r for r in rows}
    header = ["category"]
    for label in window_labels:
        header += [f"{label}_q25", f"{label}_q50", f"{label}_q75"]
    lines = [",".join(header)]
    for cat in Category:
        if not any((cat, label) in by_key for label in window_labels):
            continue
        cells = [cat.value]
        for label in window_labels:
            row = by_key.get((cat, label))
            cells += ["", "", ""] if row is None else [str(row.q25), str(row.q50), str(row.q75)]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_distances_csv(path: str, hist: DistanceHistogram) -> None:
    lines = ["bin_start_km,bin_end_km,count"]
    for k, count in enumerate(hist.counts):
        lines.append(f"{k * hist.bin_width_km:.3f},{(k + 1) * hist.bin_width_km:.3f},{count}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_naics_csv(path: str, rows: Iterable[NaicsComparison]) -> None:
    lines = ["category,window,actual_pct,expected_pct,relative_shortfall"]
    ordered = sorted(rows, key=lambda r: (_category_order(r.category), r.window_label))
    for r in ordered:
        shortfall = "" if r.relative_shortfall is None else f"{r.relative_shortfall:.4f}"
        lines.append(
            f"{r.category.value},{r.window_label},{r.actual_pct:.2f},{r.expected_pct:.2f},{shortfall}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_reports(
    out_dir: str,
    *,
    counts: Mapping[Category, int],
    stats: Sequence[CategoryWorkdayStats],
    histogram: DistanceHistogram,
    naics: Sequence[NaicsComparison],
    pairs: Sequence[AnchorPair],
    window_labels: Sequence[str],
    run_config: Mapping,
    cohort_size: int,
) -> list[str]:
    """Write the full report bundle; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_category_counts_csv(str(out / "category_counts.csv"), counts)
    write_workday_stats_csv(str(out / "workday_stats.csv"), stats, window_labels)
    write_distances_csv(str(out / "distances.csv"), histogram)
    write_naics_csv(str(out / "naics_comparison.csv"), naics)
    write_anchors_geojson(str(out / "anchors.geojson"), pairs)

    bundle = {
        "version": __version__,
        "config": dict(run_config),
        "cohort_size": cohort_size,
        "category_counts": {c.value: n for c, n in counts.items() if n > 0},
        "workday_stats": [
            {
                "category": r.category.value,
                "window": r.window_label,
                "q25": r.q25,
                "q50": r.q50,
                "q75": r.q75,
                "users": r.user_count,
            }
            for r in sorted(stats, key=lambda r: (_category_order(r.category), r.window_label))
        ],
        "distance_summary": None
        if histogram.summary is None
        else {
            "min_km": histogram.summary.min_km,
            "median_km": histogram.summary.median_km,
            "max_km": histogram.summary.max_km,
        },
        "naics": [
            {
                "category": r.category.value,
                "window": r.window_label,
                "actual_pct": r.actual_pct,
                "expected_pct": r.expected_pct,
                "relative_shortfall": r.relative_shortfall,
            }
            for r in sorted(naics, key=lambda r: (_category_order(r.category), r.window_label))
        ],
    }
    (out / "report.json").write_text(
        json.dumps(bundle, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return [
        str(out / name)
        for name in (
            "category_counts.csv",
            "workday_stats.csv",
            "distances.csv",
            "naics_comparison.csv",
            "anchors.geojson",
            "report.json",
        )
    ]
