"""Synthetic ping corpora with planted ground truth.

Every generated user gets a home, a work location, an industry category, and
per-window attendance behavior drawn from a seeded per-user RNG, so corpora
are reproducible and recovery can be scored exactly. Three behavior presets
encode the sudden-drop, partial-rebound, and resilient attendance
trajectories.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Iterable, Mapping, Optional, Sequence

from .anchors import AnchorPair
from .categorize import Category
from .errors import ConfigError
from .geo import AnalysisWindow, BoundingBox, DayKind, GeoPoint, Ping, day_kind, haversine_km
from .geocode import PoiEntry

# attend-work probability per window position (baseline, lockdown, post)
PRESETS: dict[str, tuple[float, float, float]] = {
    "sudden_drop": (0.90, 0.02, 0.05),
    "partial_rebound": (0.90, 0.20, 0.60),
    "resilient": (0.85, 0.70, 0.70),
}

# workplace-name word per category; each word keyword-matches its own category
POI_NAME_WORDS: dict[Category, str] = {
    Category.AIRPORT: "Terminal",
    Category.BLUE_COLLAR: "Factory",
    Category.EDUCATION: "Academy",
    Category.ENTERTAINMENT: "Theater",
    Category.GOVERNMENT: "Courthouse",
    Category.HOTEL: "Hotel",
    Category.MEDICAL: "Hospital",
    Category.MIX: "Business",
    Category.RECREATION: "Trail",
    Category.RELIGION: "Church",
    Category.RESIDENTIAL: "Apartments",
    Category.RESTAURANT: "Diner",
    Category.RETAIL: "Market",
    Category.WHITE_COLLAR: "Office",
}


@dataclass(frozen=True, slots=True)
class BehaviorProfile:
    window_label: str
    attend_work_prob: float
    weekend_out_prob: float
    pings_per_day: tuple[int, int]
    jitter_sigma: float = 0.0002

    def __post_init__(self) -> None:
        if not 0.0 <= self.attend_work_prob <= 1.0:
            raise ValueError("attend_work_prob must be in [0, 1]")
        if not 0.0 <= self.weekend_out_prob <= 1.0:
            raise ValueError("weekend_out_prob must be in [0, 1]")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        lo, hi = self.pings_per_day
        if not 1 <= lo <= hi:
            raise ValueError("pings_per_day range invalid")


@dataclass(frozen=True, slots=True)
class GroupSpec:
    """A block of users sharing a category and attendance trajectory."""

    category: Category
    count: int
    attend_probs: tuple[float, ...]  # one per window, positional
    preset: str = ""


@dataclass
class CorpusConfig:
    bbox: BoundingBox
    windows: list[AnalysisWindow]
    groups: list[GroupSpec]
    pings_per_day: tuple[int, int] = (10, 14)
    jitter_sigma: float = 0.0002
    min_separation_deg: float = 0.01
    max_separation_deg: float = 0.2
    weekend_out_prob: float = 0.2
    noise_prob: float = 0.1  # chance of one uniform background ping per user-day

    def validate(self) -> None:
        if not self.windows:
            raise ConfigError("synth config needs at least one window")
        if not self.groups:
            raise ConfigError("synth config needs at least one user group")
        for g in self.groups:
            if g.count < 1:
                raise ConfigError("group count must be >= 1")
            if len(g.attend_probs) != len(self.windows):
                raise ConfigError(
                    f"group {g.category.value}: {len(g.attend_probs)} attend probs "
                    f"for {len(self.windows)} windows"
                )
        if self.min_separation_deg < 6 * self.jitter_sigma:
            raise ConfigError("work would sit inside the home jitter radius")
        if self.min_separation_deg > self.max_separation_deg:
            raise ConfigError("min_separation_deg exceeds max_separation_deg")
        margin = self.max_separation_deg + 5 * self.jitter_sigma
        if (
            self.bbox.max_lat - self.bbox.min_lat <= 2 * margin
            or self.bbox.max_lon - self.bbox.min_lon <= 2 * margin
        ):
            raise ConfigError("bounding box too small for the configured separations")


@dataclass(frozen=True, slots=True)
class PlantedUser:
    user_id: str
    home: GeoPoint
    work: GeoPoint
    category: Category
    profiles: tuple[BehaviorProfile, ...]  # aligned with config windows
    attendance: Mapping[str, tuple[date, ...]]  # window label -> attended workdays


@dataclass
class SyntheticCorpus:
    users: list[PlantedUser]
    pings: list[Ping]
    pois: list[PoiEntry]


@dataclass(frozen=True, slots=True)
class TruthRecord:
    user_id: str
    home: GeoPoint
    work: GeoPoint
    category: Category
    attended: Mapping[str, int]  # window label -> attended workday count


def _epoch(day: date, seconds_into_day: int, offset_minutes: int) -> int:
    midnight = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
    return int(midnight.timestamp()) + seconds_into_day - offset_minutes * 60


def _clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


def _jittered(rng: random.Random, center: GeoPoint, sigma: float, box: BoundingBox) -> GeoPoint:
    lat = _clamp(center.lat + rng.gauss(0.0, sigma), box.min_lat, box.max_lat)
    lon = _clamp(center.lon + rng.gauss(0.0, sigma), box.min_lon, box.max_lon)
    return GeoPoint(lat, lon)


def generate_corpus(config: CorpusConfig, seed: int) -> SyntheticCorpus:
    """Deterministically build users, their pings, and the matching POI catalog."""
    config.validate()
    box = config.bbox
    margin = config.max_separation_deg + 5 * config.jitter_sigma

    users: list[PlantedUser] = []
    all_pings: list[Ping] = []
    pois: list[PoiEntry] = []
    uidx = 0
    for group in config.groups:
        for _ in range(group.count):
            user_id = f"u{uidx:05d}"
            rng = random.Random(f"{seed}:{uidx}")
            home = GeoPoint(
                rng.uniform(box.min_lat + margin, box.max_lat - margin),
                rng.uniform(box.min_lon + margin, box.max_lon - margin),
            )
            sep = rng.uniform(config.min_separation_deg, config.max_separation_deg)
            angle = rng.uniform(0.0, 2.0 * math.pi)
            work = GeoPoint(home.lat + sep * math.cos(angle), home.lon + sep * math.sin(angle))

            profiles = tuple(
                BehaviorProfile(
                    window_label=w.label,
                    attend_work_prob=group.attend_probs[i],
                    weekend_out_prob=config.weekend_out_prob,
                    pings_per_day=config.pings_per_day,
                    jitter_sigma=config.jitter_sigma,
                )
                for i, w in enumerate(config.windows)
            )
            pings, attendance = _generate_user_pings(
                rng, user_id, home, work, config.windows, profiles, box, config.noise_prob
            )
            users.append(
                PlantedUser(
                    user_id=user_id,
                    home=home,
                    work=work,
                    category=group.category,
                    profiles=profiles,
                    attendance=attendance,
                )
            )
            all_pings.extend(pings)
            pois.append(
                PoiEntry(
                    name=f"{POI_NAME_WORDS[group.category]} Site {uidx:04d}",
                    point=work,
                    category_hint=group.category.value,
                )
            )
            uidx += 1
    return SyntheticCorpus(users=users, pings=all_pings, pois=pois)


def _generate_user_pings(
    rng: random.Random,
    user_id: str,
    home: GeoPoint,
    work: GeoPoint,
    windows: Sequence[AnalysisWindow],
    profiles: Sequence[BehaviorProfile],
    box: BoundingBox,
    noise_prob: float,
) -> tuple[list[Ping], dict[str, tuple[date, ...]]]:
    pings: list[Ping] = []
    attendance: dict[str, tuple[date, ...]] = {}
    for window, profile in zip(windows, profiles):
        attended: list[date] = []
        offset = window.utc_offset_minutes
        sigma = profile.jitter_sigma
        for day in window.days():
            n = rng.randint(*profile.pings_per_day)
            is_workday = day_kind(day) is DayKind.WORKDAY
            went_to_work = is_workday and rng.random() < profile.attend_work_prob
            if went_to_work:
                attended.append(day)
                n_work = max(3, n // 2)
                n_home = max(3, n - n_work)
                for _ in range(n_work):
                    t = rng.randrange(9 * 3600, 17 * 3600)  # at work 09:00-17:00
                    pings.append(Ping(user_id, _epoch(day, t, offset), _jittered(rng, work, sigma, box)))
                for _ in range(n_home):
                    # home bracket: mornings and evenings
                    if rng.random() < 0.5:
                        t = rng.randrange(6 * 3600, 8 * 3600 + 1800)
                    else:
                        t = rng.randrange(18 * 3600, 22 * 3600)
                    pings.append(Ping(user_id, _epoch(day, t, offset), _jittered(rng, home, sigma, box)))
            else:
                for _ in range(n):
                    t = rng.randrange(7 * 3600, 22 * 3600)
                    pings.append(Ping(user_id, _epoch(day, t, offset), _jittered(rng, home, sigma, box)))
            if not is_workday and rng.random() < profile.weekend_out_prob:
                # a short weekend outing somewhere random
                spot = GeoPoint(
                    rng.uniform(box.min_lat, box.max_lat), rng.uniform(box.min_lon, box.max_lon)
                )
                for _ in range(rng.randint(2, 4)):
                    t = rng.randrange(10 * 3600, 18 * 3600)
                    pings.append(Ping(user_id, _epoch(day, t, offset), _jittered(rng, spot, sigma, box)))
            if rng.random() < noise_prob:
                t = rng.randrange(8 * 3600, 20 * 3600)
                noise = GeoPoint(
                    rng.uniform(box.min_lat, box.max_lat), rng.uniform(box.min_lon, box.max_lon)
                )
                pings.append(Ping(user_id, _epoch(day, t, offset), noise))
        attendance[window.label] = tuple(attended)
    pings.sort(key=lambda p: (p.timestamp, p.point.lat, p.point.lon))
    return pings, attendance


# ---------------------------------------------------------------------------
# ground-truth file and POI catalog


def write_truth_csv(path: str, users: Iterable[PlantedUser], window_labels: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["user_id", "home_lat", "home_lon", "work_lat", "work_lon", "category"]
            + [f"attended_{lb}" for lb in window_labels]
        )
        for u in users:
            writer.writerow(
                [
                    u.user_id,
                    repr(u.home.lat),
                    repr(u.home.lon),
                    repr(u.work.lat),
                    repr(u.work.lon),
                    u.category.value,
                ]
                + [len(u.attendance.get(lb, ())) for lb in window_labels]
            )


def read_truth_csv(path: str) -> dict[str, TruthRecord]:
    out: dict[str, TruthRecord] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            attended = {
                key[len("attended_") :]: int(val)
                for key, val in row.items()
                if key.startswith("attended_")
            }
            out[row["user_id"]] = TruthRecord(
                user_id=row["user_id"],
                home=GeoPoint(float(row["home_lat"]), float(row["home_lon"])),
                work=GeoPoint(float(row["work_lat"]), float(row["work_lon"])),
                category=Category(row["category"]),
                attended=attended,
            )
    return out


def write_poi_csv(path: str, pois: Iterable[PoiEntry]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "lat", "lon", "category_hint"])
        for poi in pois:
            writer.writerow(
                [poi.name, repr(poi.point.lat), repr(poi.point.lon), poi.category_hint or ""]
            )


# ---------------------------------------------------------------------------
# recovery scoring


@dataclass(frozen=True, slots=True)
class UserScore:
    user_id: str
    home_error_deg: Optional[float]
    home_error_km: Optional[float]
    work_error_deg: Optional[float]
    work_error_km: Optional[float]
    work_expected: bool
    category_correct: Optional[bool]
    workday_abs_err: Mapping[str, int]


@dataclass
class RecoveryReport:
    user_scores: list[UserScore] = field(default_factory=list)
    total_users: int = 0
    home_recovered: int = 0
    work_correct: int = 0
    both_within_tol: int = 0
    category_matches: int = 0
    category_scored: int = 0
    workday_mae_by_window: dict[str, float] = field(default_factory=dict)

    @property
    def home_recovery_rate(self) -> float:
        return self.home_recovered / self.total_users if self.total_users else 0.0

    @property
    def work_correct_rate(self) -> float:
        return self.work_correct / self.total_users if self.total_users else 0.0

    @property
    def category_accuracy(self) -> float:
        return self.category_matches / self.category_scored if self.category_scored else 0.0


def _deg_error(a: GeoPoint, b: GeoPoint) -> float:
    return math.hypot(a.lat - b.lat, a.lon - b.lon)


def score(
    pairs: Mapping[str, AnchorPair],
    categories: Mapping[str, Category],
    work_presence: Mapping[str, Mapping[str, int]],
    truth: Mapping[str, TruthRecord],
    tol_deg: float = 0.0005,
) -> RecoveryReport:
    """Compare inferred anchors, categories, and workday counts against truth.

    A user never attending work (zero attended days in every window) with no
    inferred work anchor counts as a correct absence. Inferred users missing
    from the truth file are a fatal consistency error.
    """
    for uid in set(pairs) | set(categories) | set(work_presence):
        if uid not in truth:
            raise ValueError(f"inferred user {uid!r} not present in ground truth")

    report = RecoveryReport(total_users=len(truth))
    err_sums: dict[str, int] = {}
    err_counts: dict[str, int] = {}
    for uid in sorted(truth):
        rec = truth[uid]
        pair = pairs.get(uid)
        expected_work = rec.attended.get(_baseline_label(rec), 0) > 0

        home_err_deg = home_err_km = None
        if pair is not None:
            home_err_deg = _deg_error(pair.home, rec.home)
            home_err_km = haversine_km(pair.home, rec.home)
            if home_err_deg <= tol_deg:
                report.home_recovered += 1

        work_err_deg = work_err_km = None
        inferred_work = pair.work if pair is not None else None
        if inferred_work is not None:
            work_err_deg = _deg_error(inferred_work, rec.work)
            work_err_km = haversine_km(inferred_work, rec.work)
        if inferred_work is None:
            if not expected_work:
                report.work_correct += 1
        elif expected_work and work_err_deg is not None and work_err_deg <= tol_deg:
            report.work_correct += 1

        if (
            home_err_deg is not None
            and home_err_deg <= tol_deg
            and work_err_deg is not None
            and work_err_deg <= tol_deg
        ):
            report.both_within_tol += 1

        cat = categories.get(uid)
        cat_correct = None
        if cat is not None:
            cat_correct = cat is rec.category
            report.category_scored += 1
            if cat_correct:
                report.category_matches += 1

        abs_err: dict[str, int] = {}
        for label, true_days in rec.attended.items():
            inferred_days = work_presence.get(uid, {}).get(label, 0)
            abs_err[label] = abs(inferred_days - true_days)
            err_sums[label] = err_sums.get(label, 0) + abs_err[label]
            err_counts[label] = err_counts.get(label, 0) + 1

        report.user_scores.append(
            UserScore(
                user_id=uid,
                home_error_deg=home_err_deg,
                home_error_km=home_err_km,
                work_error_deg=work_err_deg,
                work_error_km=work_err_km,
                work_expected=expected_work,
                category_correct=cat_correct,
                workday_abs_err=abs_err,
            )
        )
    report.workday_mae_by_window = {
        label: err_sums[label] / err_counts[label] for label in err_sums
    }
    return report


def _baseline_label(rec: TruthRecord) -> str:
    # truth columns preserve window order; the first window is the baseline
    return next(iter(rec.attended), "")
