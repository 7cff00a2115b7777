"""Stage implementations behind the CLI subcommands.

Stages hand data to each other through plain files in the output directory,
so `pipeline` is literally the stage functions run in order. Per-user work is
parallelized across a process pool when workers > 1; results are merged in
sorted user order, which keeps every artifact byte-identical for any worker
count.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from . import analytics, categorize, geocode, synthgen
from .anchors import (
    AnchorPair,
    AnchorRole,
    AnchorRules,
    PresenceSeries,
    infer_home,
    infer_work,
    presence_series,
    read_anchors_csv,
    read_presence_csv,
    write_anchors_csv,
    write_anchors_geojson,
    write_presence_csv,
)
from .cluster import DbscanParams, cluster_centers, dbscan, merge_centers
from .config import RunConfig
from .errors import ConfigError
from .geo import AnalysisWindow, DayKind, GeoPoint, Ping, day_kind, local_day
from .ingest import (
    ParseError,
    PingFormat,
    activity_stats,
    filter_pings,
    parse_pings,
    select_cohort,
    write_cohort_csv,
    write_pings_csv,
)

logger = logging.getLogger(__name__)


def _require(cfg: RunConfig, names: Sequence[str], needed_by: str) -> None:
    missing = [n for n in names if not Path(cfg.artifact(n)).exists()]
    if missing:
        raise ConfigError(
            f"{needed_by} requires missing input artifacts: "
            + ", ".join(missing)
            + " (run the earlier stages first)"
        )


def _iter_input_pings(cfg: RunConfig, errors: list[ParseError]) -> Iterator[Ping]:
    for path in cfg.inputs:
        with open(path, encoding="utf-8", newline="") as fh:
            yield from parse_pings(fh, cfg.format, errors, has_header=cfg.has_header)


def run_synth(cfg: RunConfig) -> dict:
    """Generate a synthetic corpus with ground truth and its POI catalog."""
    if cfg.synth is None:
        raise ConfigError("synth stage needs a 'synth' section in the config")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    corpus = synthgen.generate_corpus(cfg.synth, cfg.seed)
    n = write_pings_csv(cfg.artifact("pings.csv"), corpus.pings)
    synthgen.write_truth_csv(cfg.artifact("truth.csv"), corpus.users, cfg.window_labels)
    synthgen.write_poi_csv(cfg.artifact("poi.csv"), corpus.pois)
    logger.info("synth: %d users, %d pings", len(corpus.users), n)
    return {"users": len(corpus.users), "pings": n}


def run_ingest(cfg: RunConfig) -> dict:
    """Filter inputs per window, compute activity, and select the cohort."""
    if not cfg.inputs:
        raise ConfigError("no input ping files configured")
    for path in cfg.inputs:
        if not Path(path).exists():
            raise ConfigError(f"input ping file not found: {path}")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)

    stats_by_window: dict[str, dict] = {}
    totals: dict[str, int] = {}
    for window in cfg.windows:
        errors: list[ParseError] = []
        out_path = cfg.artifact(f"pings_{window.label}.csv")
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")

            def tee(pings: Iterable[Ping]) -> Iterator[Ping]:
                count = 0
                for p in pings:
                    writer.writerow([p.user_id, p.timestamp, repr(p.point.lat), repr(p.point.lon)])
                    count += 1
                    yield p
                totals[window.label] = count

            filtered = filter_pings(_iter_input_pings(cfg, errors), cfg.bbox, window)
            stats_by_window[window.label] = activity_stats(tee(filtered), window)
        if errors:
            logger.warning(
                "ingest window %s: %d malformed lines skipped (first at line %d)",
                window.label,
                len(errors),
                errors[0].line,
            )

    cohort = select_cohort(stats_by_window, cfg.cohort)
    write_cohort_csv(
        cfg.artifact("cohort.csv"), cohort, stats_by_window, cfg.cohort.baseline_window_label
    )
    logger.info("ingest: cohort size %d", len(cohort))
    return {"cohort_size": len(cohort), "pings_per_window": totals}


def read_cohort_ids(path: str) -> list[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return sorted(row["user_id"] for row in csv.DictReader(fh))


def _load_window_pings(
    cfg: RunConfig, window: AnalysisWindow, keep: set[str]
) -> dict[str, list[Ping]]:
    # stage artifacts are always CsvV1 regardless of the original input format
    errors: list[ParseError] = []
    by_user: dict[str, list[Ping]] = defaultdict(list)
    path = cfg.artifact(f"pings_{window.label}.csv")
    with open(path, encoding="utf-8", newline="") as fh:
        for p in parse_pings(fh, PingFormat.CSV_V1, errors):
            if p.user_id in keep:
                by_user[p.user_id].append(p)
    if errors:
        raise ConfigError(f"stage artifact {path} is corrupt: {len(errors)} bad lines")
    return by_user


def infer_user_anchors(
    user_id: str,
    pings: Sequence[Ping],
    window: AnalysisWindow,
    params: DbscanParams,
    rules: AnchorRules,
) -> Optional[AnchorPair]:
    """Anchor inference for one user: split by day kind, cluster, merge, gate."""
    workday_pts: list[GeoPoint] = []
    workday_dates = []
    weekend_pts: list[GeoPoint] = []
    weekend_dates = []
    for p in pings:
        d = local_day(p.timestamp, window.utc_offset_minutes)
        if day_kind(d) is DayKind.WORKDAY:
            workday_pts.append(p.point)
            workday_dates.append(d)
        else:
            weekend_pts.append(p.point)
            weekend_dates.append(d)

    centers = []
    if workday_pts:
        result = dbscan(workday_pts, params)
        centers += cluster_centers(workday_pts, result, workday_dates, DayKind.WORKDAY)
    if weekend_pts:
        result = dbscan(weekend_pts, params)
        centers += cluster_centers(weekend_pts, result, weekend_dates, DayKind.WEEKEND)
    merged = merge_centers(centers, radius=params.eps)

    home = infer_home(merged, rules)
    if home is None:
        return None
    home_center, home_days = home
    work = infer_work(merged, home_center, rules)
    if work is None:
        return AnchorPair(user_id, home_center.point, home_days)
    work_center, work_days = work
    return AnchorPair(user_id, home_center.point, home_days, work_center.point, work_days)


def _anchor_task(args) -> tuple[str, Optional[AnchorPair]]:
    user_id, pings, window, params, rules = args
    return user_id, infer_user_anchors(user_id, pings, window, params, rules)


def _infer_anchor_map(tasks: list, workers: int) -> dict[str, AnchorPair]:
    out: dict[str, AnchorPair] = {}
    if workers <= 1 or len(tasks) <= 1:
        results: Iterable = map(_anchor_task, tasks)
        for uid, pair in results:
            if pair is not None:
                out[uid] = pair
        return out
    chunk = max(1, len(tasks) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for uid, pair in pool.map(_anchor_task, tasks, chunksize=chunk):
            if pair is not None:
                out[uid] = pair
    return out


def run_cluster(cfg: RunConfig) -> dict:
    """Infer anchors from the baseline window and measure per-window presence."""
    _require(
        cfg,
        ["cohort.csv"] + [f"pings_{lb}.csv" for lb in cfg.window_labels],
        needed_by="cluster",
    )
    cohort = set(read_cohort_ids(cfg.artifact("cohort.csv")))
    baseline = cfg.baseline_window

    def infer_for_window(window: AnalysisWindow) -> dict[str, AnchorPair]:
        by_user = _load_window_pings(cfg, window, cohort)
        tasks = [(uid, by_user[uid], window, cfg.dbscan, cfg.anchors) for uid in sorted(by_user)]
        return _infer_anchor_map(tasks, cfg.workers)

    pairs = infer_for_window(baseline)
    ordered_pairs = [pairs[uid] for uid in sorted(pairs)]
    write_anchors_csv(cfg.artifact("anchors.csv"), ordered_pairs)
    write_anchors_geojson(cfg.artifact("anchors.geojson"), ordered_pairs)

    series: list[PresenceSeries] = []
    for window in cfg.windows:
        if cfg.per_window_anchors and window.label != baseline.label:
            window_pairs = infer_for_window(window)
        else:
            window_pairs = pairs
        if not window_pairs:
            continue
        by_user = _load_window_pings(cfg, window, set(window_pairs))
        for uid in sorted(window_pairs):
            series.extend(
                presence_series(
                    by_user.get(uid, []), window_pairs[uid], cfg.anchors.presence_radius, window
                )
            )
    write_presence_csv(cfg.artifact("presence.csv"), series)
    with_work = sum(1 for p in ordered_pairs if p.work is not None)
    logger.info("cluster: %d homes, %d with work anchors", len(ordered_pairs), with_work)
    return {"homes": len(ordered_pairs), "works": with_work}


def run_geocode(cfg: RunConfig) -> dict:
    """Resolve each work anchor to a workplace name via the tiered cascade."""
    _require(cfg, ["anchors.csv"], needed_by="geocode")
    pairs = read_anchors_csv(cfg.artifact("anchors.csv"))

    overrides = {}
    if cfg.geocode.overrides:
        overrides = geocode.load_overrides_tsv(cfg.geocode.overrides)
    poi = None
    if cfg.geocode.poi_db:
        if not Path(cfg.geocode.poi_db).exists():
            raise ConfigError(f"POI database not found: {cfg.geocode.poi_db}")
        poi = geocode.PoiDb.load_csv(cfg.geocode.poi_db)
    endpoint = None
    if cfg.geocode.base_url:
        endpoint = geocode.RemoteEndpoint(
            base_url=cfg.geocode.base_url,
            name_field=cfg.geocode.name_field,
            address_fields=cfg.geocode.address_fields,
            min_request_interval_s=cfg.geocode.min_request_interval_s,
            timeout_s=cfg.geocode.timeout_s,
        )
    cache = geocode.GeocodeCache.load(cfg.cache_path())
    cascade = geocode.GeocodeCascade(
        overrides=overrides,
        cache=cache,
        endpoint=endpoint,
        poi=poi,
        max_poi_radius_m=cfg.geocode.max_poi_radius_m,
    )

    records = []
    for pair in pairs:
        if pair.work is None:
            continue
        records.append(geocode.resolve(pair.work, cascade, user_id=pair.user_id))
    _write_workplaces_csv(cfg.artifact("workplaces.csv"), records)
    cache.save(cfg.cache_path())
    resolved = sum(1 for r in records if r.source is not geocode.ResolutionSource.UNRESOLVED)
    logger.info("geocode: %d/%d anchors resolved", resolved, len(records))
    return {"anchors": len(records), "resolved": resolved}


def _write_workplaces_csv(path: str, records: Iterable[geocode.WorkplaceRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "lat", "lon", "name", "source", "category_hint"])
        for r in records:
            writer.writerow(
                [
                    r.user_id,
                    repr(r.anchor.lat),
                    repr(r.anchor.lon),
                    r.name,
                    r.source.value,
                    r.category_hint or "",
                ]
            )


def _read_workplaces_csv(path: str) -> list[geocode.WorkplaceRecord]:
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                geocode.WorkplaceRecord(
                    user_id=row["user_id"],
                    anchor=GeoPoint(float(row["lat"]), float(row["lon"])),
                    name=row["name"],
                    source=geocode.ResolutionSource(row["source"]),
                    category_hint=row["category_hint"] or None,
                )
            )
    return records


def run_categorize(cfg: RunConfig) -> dict:
    """Map resolved workplace names to industry categories; report word counts."""
    _require(cfg, ["workplaces.csv"], needed_by="categorize")
    records = _read_workplaces_csv(cfg.artifact("workplaces.csv"))
    if cfg.keywords_path:
        table = categorize.load_keyword_table(cfg.keywords_path)
    else:
        table = categorize.default_keyword_table()

    freq = categorize.word_frequencies(r.name for r in records if r.name)
    categorize.write_word_frequencies_csv(cfg.artifact("word_frequencies.csv"), freq)

    with open(cfg.artifact("categories.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "name", "source", "category"])
        for r in records:
            cat = categorize.categorize(r.name, table, r.category_hint)
            writer.writerow([r.user_id, r.name, r.source.value, cat.value])
    logger.info("categorize: %d workplaces categorized", len(records))
    return {"workplaces": len(records)}


def read_categories_csv(path: str) -> dict[str, categorize.Category]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["user_id"]: categorize.Category(row["category"]) for row in csv.DictReader(fh)}


def workdays_in(window: AnalysisWindow) -> int:
    return sum(1 for d in window.days() if day_kind(d) is DayKind.WORKDAY)


def run_report(cfg: RunConfig) -> dict:
    """Aggregate categories, presence, and distances into the report bundle."""
    _require(
        cfg, ["cohort.csv", "anchors.csv", "presence.csv", "categories.csv"], needed_by="report"
    )
    pairs = read_anchors_csv(cfg.artifact("anchors.csv"))
    series = read_presence_csv(cfg.artifact("presence.csv"))
    categories = read_categories_csv(cfg.artifact("categories.csv"))
    cohort_size = len(read_cohort_ids(cfg.artifact("cohort.csv")))

    counts = analytics.category_counts(categories.values())

    work_days: dict[tuple[str, str], int] = {}
    for s in series:
        if s.anchor_role is AnchorRole.WORK:
            work_days[(s.user_id, s.window_label)] = s.present_workdays
    groups: dict[tuple[categorize.Category, str], list[int]] = {}
    for label in cfg.window_labels:
        for uid in sorted(categories):
            key = (categories[uid], label)
            groups.setdefault(key, []).append(work_days.get((uid, label), 0))
    stats = analytics.workday_quantiles(groups)

    pairs_with_work = [p for p in pairs if p.work is not None]
    histogram = analytics.distance_distribution(pairs_with_work, cfg.bin_width_km)

    naics_rows: list[analytics.NaicsComparison] = []
    if cfg.naics_path:
        expectations = analytics.load_naics_expectations(cfg.naics_path)
        workdays_by_window = {w.label: workdays_in(w) for w in cfg.windows}
        naics_rows = analytics.naics_comparison(stats, expectations, workdays_by_window)

    written = analytics.emit_reports(
        cfg.out_dir,
        counts=counts,
        stats=stats,
        histogram=histogram,
        naics=naics_rows,
        pairs=pairs,
        window_labels=cfg.window_labels,
        run_config=cfg.embedded_dict(),
        cohort_size=cohort_size,
    )
    logger.info("report: wrote %d files to %s", len(written), cfg.out_dir)
    return {"files": written}


def run_pipeline(cfg: RunConfig) -> dict:
    """All stages in order; synth first when the config plants a corpus."""
    summary = {}
    if cfg.synth is not None:
        summary["synth"] = run_synth(cfg)
    summary["ingest"] = run_ingest(cfg)
    summary["cluster"] = run_cluster(cfg)
    summary["geocode"] = run_geocode(cfg)
    summary["categorize"] = run_categorize(cfg)
    summary["report"] = run_report(cfg)
    return summary


STAGES = {
    "synth": run_synth,
    "ingest": run_ingest,
    "cluster": run_cluster,
    "geocode": run_geocode,
    "categorize": run_categorize,
    "report": run_report,
    "pipeline": run_pipeline,
}
