"""Declarative run configuration: one JSON document drives every stage.

Relative paths inside a config file resolve against the file's directory;
paths given on the command line resolve against the working directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Mapping, Optional

from .anchors import AnchorRules
from .categorize import Category
from .cluster import DbscanParams
from .errors import ConfigError
from .geo import AnalysisWindow, BoundingBox
from .ingest import CohortCriteria, PingFormat
from .synthgen import PRESETS, CorpusConfig, GroupSpec

DEFAULT_WINDOWS = [
    {"label": "jan", "start_day": "2020-01-01", "end_day": "2020-01-31", "utc_offset_minutes": -300},
    {"label": "apr", "start_day": "2020-04-01", "end_day": "2020-04-30", "utc_offset_minutes": -240},
    {"label": "jul", "start_day": "2020-07-01", "end_day": "2020-07-31", "utc_offset_minutes": -240},
]

_TOP_LEVEL_KEYS = {
    "inputs",
    "format",
    "has_header",
    "bbox",
    "windows",
    "baseline_window",
    "cohort",
    "dbscan",
    "anchors",
    "geocode",
    "keywords",
    "naics_expectations",
    "report",
    "out_dir",
    "workers",
    "seed",
    "synth",
}


@dataclass
class GeocodeSettings:
    base_url: Optional[str] = None
    name_field: str = "name"
    address_fields: tuple[str, ...] = ("amenity", "building", "shop")
    min_request_interval_s: float = 1.0
    timeout_s: float = 10.0
    poi_db: Optional[str] = None
    overrides: Optional[str] = None
    cache: Optional[str] = None  # defaults to <out_dir>/geocode_cache.jsonl
    max_poi_radius_m: float = 100.0


@dataclass
class RunConfig:
    bbox: BoundingBox
    windows: list[AnalysisWindow]
    inputs: list[str] = field(default_factory=list)
    format: PingFormat = PingFormat.CSV_V1
    has_header: bool = False
    cohort: CohortCriteria = field(default_factory=CohortCriteria)
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    anchors: AnchorRules = field(default_factory=AnchorRules)
    per_window_anchors: bool = False
    geocode: GeocodeSettings = field(default_factory=GeocodeSettings)
    keywords_path: Optional[str] = None
    naics_path: Optional[str] = None
    bin_width_km: float = 1.0
    out_dir: str = "out"
    workers: int = 1
    seed: int = 0
    synth: Optional[CorpusConfig] = None

    @property
    def baseline_window(self) -> AnalysisWindow:
        for w in self.windows:
            if w.label == self.cohort.baseline_window_label:
                return w
        raise ConfigError(f"baseline window {self.cohort.baseline_window_label!r} not configured")

    @property
    def window_labels(self) -> list[str]:
        return [w.label for w in self.windows]

    def artifact(self, name: str) -> str:
        return str(Path(self.out_dir) / name)

    def cache_path(self) -> str:
        return self.geocode.cache or self.artifact("geocode_cache.jsonl")

    def embedded_dict(self) -> dict[str, Any]:
        """Config record for report.json.

        Execution knobs (worker count, output location) do not influence
        results by design and are omitted so report bundles stay
        byte-identical across them; output-relative paths are shown as $OUT.
        """

        def disp(p: Optional[str]) -> Optional[str]:
            if p is None:
                return None
            try:
                return "$OUT/" + str(Path(p).relative_to(self.out_dir))
            except ValueError:
                return str(p)

        return {
            "inputs": [disp(p) for p in self.inputs],
            "format": self.format.value,
            "has_header": self.has_header,
            "bbox": {
                "min_lat": self.bbox.min_lat,
                "max_lat": self.bbox.max_lat,
                "min_lon": self.bbox.min_lon,
                "max_lon": self.bbox.max_lon,
            },
            "windows": [
                {
                    "label": w.label,
                    "start_day": w.start_day.isoformat(),
                    "end_day": w.end_day.isoformat(),
                    "utc_offset_minutes": w.utc_offset_minutes,
                }
                for w in self.windows
            ],
            "baseline_window": self.cohort.baseline_window_label,
            "cohort": {
                "min_active_days_per_window": self.cohort.min_active_days_per_window,
                "min_pings_baseline": self.cohort.min_pings_baseline,
            },
            "dbscan": {
                "eps": self.dbscan.eps,
                "min_pts_fraction": self.dbscan.min_pts_fraction,
                "min_pts_floor": self.dbscan.min_pts_floor,
            },
            "anchors": {
                "min_home_days": self.anchors.min_home_days,
                "min_work_days": self.anchors.min_work_days,
                "presence_radius": self.anchors.presence_radius,
                "per_window_anchors": self.per_window_anchors,
            },
            "geocode": {
                "base_url": self.geocode.base_url,
                "name_field": self.geocode.name_field,
                "address_fields": list(self.geocode.address_fields),
                "min_request_interval_s": self.geocode.min_request_interval_s,
                "timeout_s": self.geocode.timeout_s,
                "poi_db": disp(self.geocode.poi_db),
                "overrides": disp(self.geocode.overrides),
                "max_poi_radius_m": self.geocode.max_poi_radius_m,
            },
            "keywords": disp(self.keywords_path),
            "naics_expectations": disp(self.naics_path),
            "report": {"bin_width_km": self.bin_width_km},
            "seed": self.seed,
            "synth_users": sum(g.count for g in self.synth.groups) if self.synth else None,
        }


def _parse_date(value: str, what: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError as exc:
        raise ConfigError(f"bad {what}: {exc}") from None


def _parse_windows(raw: list[dict]) -> list[AnalysisWindow]:
    windows = []
    for entry in raw:
        try:
            windows.append(
                AnalysisWindow(
                    label=str(entry["label"]),
                    start_day=_parse_date(entry["start_day"], "window start_day"),
                    end_day=_parse_date(entry["end_day"], "window end_day"),
                    utc_offset_minutes=int(entry.get("utc_offset_minutes", 0)),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad window entry: {exc}") from None
    labels = [w.label for w in windows]
    if len(set(labels)) != len(labels):
        raise ConfigError("window labels must be unique")
    ordered = sorted(windows, key=lambda w: w.start_day)
    for a, b in zip(ordered, ordered[1:]):
        if b.start_day <= a.end_day:
            raise ConfigError(f"windows {a.label!r} and {b.label!r} overlap")
    return windows


def _parse_synth(raw: Mapping, bbox: BoundingBox, windows: list[AnalysisWindow]) -> CorpusConfig:
    groups = []
    for entry in raw.get("groups", []):
        try:
            category = Category(entry["category"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad synth group category: {exc}") from None
        preset = entry.get("preset", "")
        if "attend_probs" in entry:
            probs = tuple(float(p) for p in entry["attend_probs"])
        elif preset:
            if preset not in PRESETS:
                raise ConfigError(f"unknown synth preset {preset!r}")
            probs = tuple(PRESETS[preset][: len(windows)])
            if len(probs) < len(windows):
                probs = probs + (probs[-1],) * (len(windows) - len(probs))
        else:
            raise ConfigError("synth group needs either 'preset' or 'attend_probs'")
        groups.append(
            GroupSpec(category=category, count=int(entry.get("count", 1)), attend_probs=probs, preset=preset)
        )
    ppd = raw.get("pings_per_day", [10, 14])
    cfg = CorpusConfig(
        bbox=bbox,
        windows=windows,
        groups=groups,
        pings_per_day=(int(ppd[0]), int(ppd[1])),
        jitter_sigma=float(raw.get("jitter_sigma", 0.0002)),
        min_separation_deg=float(raw.get("min_separation_deg", 0.01)),
        max_separation_deg=float(raw.get("max_separation_deg", 0.2)),
        weekend_out_prob=float(raw.get("weekend_out_prob", 0.2)),
        noise_prob=float(raw.get("noise_prob", 0.1)),
    )
    cfg.validate()
    return cfg


def config_from_dict(raw: Mapping, base_dir: str = ".") -> RunConfig:
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def resolve(p: Optional[str]) -> Optional[str]:
        if p is None:
            return None
        path = Path(p)
        return str(path if path.is_absolute() else Path(base_dir) / path)

    try:
        bbox_raw = raw["bbox"]
        bbox = BoundingBox(
            min_lat=float(bbox_raw["min_lat"]),
            max_lat=float(bbox_raw["max_lat"]),
            min_lon=float(bbox_raw["min_lon"]),
            max_lon=float(bbox_raw["max_lon"]),
        )
    except KeyError:
        raise ConfigError("config requires a 'bbox' object") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad bbox: {exc}") from None

    windows = _parse_windows(raw.get("windows", DEFAULT_WINDOWS))
    baseline = str(raw.get("baseline_window", windows[0].label))
    if baseline not in {w.label for w in windows}:
        raise ConfigError(f"baseline window {baseline!r} is not a configured window")

    cohort_raw = raw.get("cohort", {})
    dbscan_raw = raw.get("dbscan", {})
    anchors_raw = raw.get("anchors", {})
    geocode_raw = raw.get("geocode", {})
    report_raw = raw.get("report", {})
    try:
        cohort = CohortCriteria(
            min_active_days_per_window=int(cohort_raw.get("min_active_days_per_window", 25)),
            min_pings_baseline=int(cohort_raw.get("min_pings_baseline", 301)),
            baseline_window_label=baseline,
        )
        dbscan = DbscanParams(
            eps=float(dbscan_raw.get("eps", 0.001)),
            min_pts_fraction=float(dbscan_raw.get("min_pts_fraction", 0.05)),
            min_pts_floor=int(dbscan_raw.get("min_pts_floor", 5)),
        )
        anchors = AnchorRules(
            min_home_days=int(anchors_raw.get("min_home_days", 18)),
            min_work_days=int(anchors_raw.get("min_work_days", 11)),
            presence_radius=float(anchors_raw.get("presence_radius", dbscan.eps)),
        )
        fmt = PingFormat(str(raw.get("format", "csv")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    geocode = GeocodeSettings(
        base_url=geocode_raw.get("base_url"),
        name_field=str(geocode_raw.get("name_field", "name")),
        address_fields=tuple(geocode_raw.get("address_fields", ("amenity", "building", "shop"))),
        min_request_interval_s=float(geocode_raw.get("min_request_interval_s", 1.0)),
        timeout_s=float(geocode_raw.get("timeout_s", 10.0)),
        poi_db=resolve(geocode_raw.get("poi_db")),
        overrides=resolve(geocode_raw.get("overrides")),
        cache=resolve(geocode_raw.get("cache")),
        max_poi_radius_m=float(geocode_raw.get("max_poi_radius_m", 100.0)),
    )

    cfg = RunConfig(
        bbox=bbox,
        windows=windows,
        inputs=[resolve(p) for p in raw.get("inputs", [])],
        format=fmt,
        has_header=bool(raw.get("has_header", False)),
        cohort=cohort,
        dbscan=dbscan,
        anchors=anchors,
        per_window_anchors=bool(anchors_raw.get("per_window_anchors", False)),
        geocode=geocode,
        keywords_path=resolve(raw.get("keywords")),
        naics_path=resolve(raw.get("naics_expectations")),
        bin_width_km=float(report_raw.get("bin_width_km", 1.0)),
        out_dir=resolve(raw.get("out_dir", "out")),
        workers=int(raw.get("workers", 1)),
        seed=int(raw.get("seed", 0)),
    )
    if "synth" in raw and raw["synth"] is not None:
        cfg.synth = _parse_synth(raw["synth"], bbox, windows)
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.bin_width_km <= 0:
        raise ConfigError("bin_width_km must be > 0")

    # static configuration files must exist up front; stage artifacts are
    # checked when the consuming stage runs
    for what, path in [
        ("keywords", cfg.keywords_path),
        ("naics_expectations", cfg.naics_path),
        ("geocode.overrides", cfg.geocode.overrides),
    ]:
        if path is not None and not Path(path).exists():
            raise ConfigError(f"{what} file not found: {path}")
    return cfg


def load_config(
    path: str,
    out_dir: Optional[str] = None,
    workers: Optional[int] = None,
    seed: Optional[int] = None,
) -> RunConfig:
    """Read a JSON config file and apply command-line overrides."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except ValueError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    cfg = config_from_dict(raw, base_dir=str(Path(path).resolve().parent))
    if out_dir is not None:
        cfg.out_dir = str(Path(out_dir).resolve())
    if workers is not None:
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        cfg.workers = workers
    if seed is not None:
        cfg.seed = seed
    # a synth-driven pipeline reads the corpus it just wrote
    if cfg.synth is not None and not cfg.inputs:
        cfg.inputs = [cfg.artifact("pings.csv")]
        if cfg.geocode.poi_db is None:
            cfg.geocode.poi_db = cfg.artifact("poi.csv")
    return cfg
