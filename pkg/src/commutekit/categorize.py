"""Bag-of-words frequency counting and keyword-rule industry categorization."""

from __future__ import annotations

import csv
import enum
import json
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, Sequence

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class Category(enum.Enum):
    AIRPORT = "Airport"
    BLUE_COLLAR = "BlueCollar"
    EDUCATION = "Education"
    ENTERTAINMENT = "Entertainment"
    GOVERNMENT = "Government"
    HOTEL = "Hotel"
    MEDICAL = "Medical"
    MIX = "Mix"
    RECREATION = "Recreation"
    RELIGION = "Religion"
    RESIDENTIAL = "Residential"
    RESTAURANT = "Restaurant"
    RETAIL = "Retail"
    WHITE_COLLAR = "WhiteCollar"
    OTHER = "Other"


@dataclass(frozen=True, slots=True)
class KeywordRule:
    category: Category
    priority: int  # lower rank evaluated first
    keywords: frozenset[str]


class KeywordTable:
    """Priority-ordered keyword rules; first matching rule wins."""

    def __init__(self, rules: Sequence[KeywordRule]):
        priorities = [r.priority for r in rules]
        if len(set(priorities)) != len(priorities):
            raise ValueError("rule priorities must be unique")
        for rule in rules:
            for kw in rule.keywords:
                if kw != kw.lower():
                    raise ValueError(f"keyword not lowercase: {kw!r}")
        ranks = {r.category: r.priority for r in rules}
        if Category.MEDICAL in ranks and Category.EDUCATION in ranks:
            if ranks[Category.MEDICAL] >= ranks[Category.EDUCATION]:
                raise ValueError("Medical must outrank Education")
        self.rules = tuple(sorted(rules, key=lambda r: r.priority))
        self._by_name = {r.category.value.lower(): r.category for r in rules}

    def match(self, tokens: Iterable[str]) -> Optional[Category]:
        token_set = set(tokens)
        for rule in self.rules:
            if token_set & rule.keywords:
                return rule.category
        return None

    def category_for_hint(self, hint: str) -> Optional[Category]:
        # a hint may name a category outright ("blue collar") or carry keywords
        squashed = "".join(tokenize(hint))
        for cat in Category:
            if squashed == cat.value.lower():
                return cat
        return self.match(tokenize(hint))


def tokenize(name: str) -> list[str]:
    """Lowercased alphanumeric runs; everything else is a separator."""
    return _TOKEN_RE.findall(name.lower())


def word_frequencies(names: Iterable[str]) -> Counter[str]:
    """Corpus-wide token counts over workplace names."""
    freq: Counter[str] = Counter()
    for name in names:
        freq.update(tokenize(name))
    return freq


def categorize(name: str, table: KeywordTable, poi_hint: Optional[str] = None) -> Category:
    """Map a workplace name to an industry category; Other is the sink."""
    matched = table.match(tokenize(name))
    if matched is not None:
        return matched
    if poi_hint:
        hinted = table.category_for_hint(poi_hint)
        if hinted is not None:
            return hinted
    return Category.OTHER


def load_keyword_table(path: str) -> KeywordTable:
    """Load rules from an ordered JSON list of {category, priority, keywords}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return _table_from_obj(raw)


def default_keyword_table() -> KeywordTable:
    raw = json.loads(resources.files("commutekit.data").joinpath("keywords.json").read_text("utf-8"))
    return _table_from_obj(raw)


def _table_from_obj(raw: object) -> KeywordTable:
    if not isinstance(raw, list):
        raise ValueError("keyword table must be a JSON list")
    rules = []
    for entry in raw:
        rules.append(
            KeywordRule(
                category=Category(entry["category"]),
                priority=int(entry["priority"]),
                keywords=frozenset(str(k) for k in entry["keywords"]),
            )
        )
    return KeywordTable(rules)


def write_word_frequencies_csv(path: str, freq: Counter[str]) -> None:
    """token,count rows sorted by count desc then token asc."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["token", "count"])
        for token, count in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0])):
            writer.writerow([token, count])
