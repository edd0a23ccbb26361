"""Catalog and rating ingestion: load, validate, clean and persist item records.

All functions are pure over immutable inputs. Catalog files are JSONL (one
object per line with ``id``, ``title``, ``description``, ``genres``,
``domain``) or CSV with a fixed ``id,title,description,genres,domain`` header
where genres are ``|``-separated. Ratings files are JSONL with ``user_id``,
``item_id``, ``domain`` and a numeric ``rating`` in [1, 5].
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import TooManyMalformedRows

DOMAINS = ("source", "target")

# Files shorter than this keep all parseable rows no matter how many fail;
# above it, >10% malformed rows means the file is probably the wrong one.
_FATAL_MIN_ROWS = 10
_FATAL_FRACTION = 0.10

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class Item:
    id: str
    title: str
    description: str
    genres: tuple[str, ...]
    domain: str


@dataclass(frozen=True)
class Rating:
    user_id: str
    item_id: str
    domain: str
    rating: float


@dataclass(frozen=True)
class RecordIssue:
    """One rejected input row, with its 1-based line number."""

    line: int
    reason: str


@dataclass
class Catalog:
    items: list[Item]

    def domain_counts(self) -> dict[str, int]:
        counts = {d: 0 for d in DOMAINS}
        for item in self.items:
            counts[item.domain] = counts.get(item.domain, 0) + 1
        return counts

    def by_id(self) -> dict[str, Item]:
        return {item.id: item for item in self.items}

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class CleanStats:
    items_in: int = 0
    items_out: int = 0
    dropped_duplicate_id: int = 0
    dropped_duplicate_title: int = 0
    dropped_missing: int = 0

    @property
    def dropped_duplicate(self) -> int:
        return self.dropped_duplicate_id + self.dropped_duplicate_title


def normalize_genre(token: str) -> str:
    """Lowercase and join internal whitespace with '-' so one genre is one token."""
    return _WS_RE.sub("-", token.strip().lower())


def _parse_record(record: dict, line: int) -> Item | RecordIssue:
    for key in ("id", "title", "description", "genres", "domain"):
        if key not in record:
            return RecordIssue(line, f"missing field '{key}'")
    item_id = record["id"]
    if not isinstance(item_id, str) or not item_id.strip():
        return RecordIssue(line, "field 'id' must be a non-empty string")
    if record["domain"] not in DOMAINS:
        return RecordIssue(line, f"field 'domain' must be one of {DOMAINS}")
    genres = record["genres"]
    if not isinstance(genres, list) or not all(isinstance(g, str) for g in genres):
        return RecordIssue(line, "field 'genres' must be a list of strings")
    if not isinstance(record["title"], str) or not isinstance(record["description"], str):
        return RecordIssue(line, "fields 'title' and 'description' must be strings")
    return Item(
        id=item_id,
        title=record["title"],
        description=record["description"],
        genres=tuple(genres),
        domain=record["domain"],
    )


def _load_jsonl_rows(path: Path) -> list[tuple[int, dict | RecordIssue]]:
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("row is not an object")
                rows.append((line_no, obj))
            except (json.JSONDecodeError, ValueError) as exc:
                rows.append((line_no, RecordIssue(line_no, f"unparseable row: {exc}")))
    return rows


def _load_csv_rows(path: Path) -> list[tuple[int, dict | RecordIssue]]:
    expected = ["id", "title", "description", "genres", "domain"]
    rows = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return []
        if header != expected:
            raise TooManyMalformedRows(
                f"{path}: CSV header must be exactly {','.join(expected)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                rows.append((line_no, RecordIssue(line_no, f"expected {len(expected)} columns, got {len(row)}")))
                continue
            record = dict(zip(expected, row))
            record["genres"] = [g for g in record["genres"].split("|") if g]
            rows.append((line_no, record))
    return rows


def load_catalog(path: str | Path, fmt: str = "jsonl") -> tuple[Catalog, list[RecordIssue]]:
    """Load a catalog file, returning all parseable items plus per-row issues.

    Raises FileNotFoundError if the path is missing, and TooManyMalformedRows
    when a non-trivial file is mostly unparseable (wrong file, wrong format).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"catalog file not found: {path}")
    if fmt == "jsonl":
        rows = _load_jsonl_rows(path)
    elif fmt == "csv":
        rows = _load_csv_rows(path)
    else:
        raise ValueError(f"unknown catalog format: {fmt!r}")

    items: list[Item] = []
    issues: list[RecordIssue] = []
    for line_no, row in rows:
        if isinstance(row, RecordIssue):
            issues.append(row)
            continue
        parsed = _parse_record(row, line_no)
        if isinstance(parsed, RecordIssue):
            issues.append(parsed)
        else:
            items.append(parsed)

    total = len(rows)
    if total >= _FATAL_MIN_ROWS and len(issues) > _FATAL_FRACTION * total:
        raise TooManyMalformedRows(
            f"{path}: {len(issues)}/{total} rows malformed; first: "
            f"line {issues[0].line}: {issues[0].reason}"
        )
    return Catalog(items=items), issues


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    """Write a catalog as JSONL; load_catalog(save_catalog(c)) preserves the item set."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for item in catalog.items:
            fh.write(
                json.dumps(
                    {
                        "id": item.id,
                        "title": item.title,
                        "description": item.description,
                        "genres": list(item.genres),
                        "domain": item.domain,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def clean(catalog: Catalog) -> tuple[Catalog, CleanStats]:
    """Deduplicate and validate a catalog.

    Duplicates go first (by (domain, id), then by (domain, lowercased trimmed
    title)), keeping the first occurrence; then items whose description is
    empty after trimming or whose normalized genre list is empty are dropped.
    Non-Latin-script text passes through untouched. Idempotent.
    """
    stats = CleanStats(items_in=len(catalog.items))
    seen_ids: set[tuple[str, str]] = set()
    seen_titles: set[tuple[str, str]] = set()
    survivors: list[Item] = []
    for item in catalog.items:
        id_key = (item.domain, item.id)
        if id_key in seen_ids:
            stats.dropped_duplicate_id += 1
            continue
        seen_ids.add(id_key)
        title_key = (item.domain, item.title.strip().lower())
        if title_key in seen_titles:
            stats.dropped_duplicate_title += 1
            continue
        seen_titles.add(title_key)
        survivors.append(item)

    cleaned: list[Item] = []
    for item in survivors:
        description = item.description.strip()
        genres = []
        for g in item.genres:
            norm = normalize_genre(g)
            if norm and norm not in genres:
                genres.append(norm)
        if not description or not genres:
            stats.dropped_missing += 1
            continue
        cleaned.append(replace(item, description=description, genres=tuple(genres)))

    stats.items_out = len(cleaned)
    return Catalog(items=cleaned), stats


def load_ratings(path: str | Path) -> tuple[list[Rating], list[RecordIssue]]:
    """Load a ratings JSONL file; out-of-range or malformed rows are rejected per-row."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"ratings file not found: {path}")
    ratings: list[Rating] = []
    issues: list[RecordIssue] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                issues.append(RecordIssue(line_no, f"unparseable row: {exc}"))
                continue
            if not isinstance(obj, dict):
                issues.append(RecordIssue(line_no, "row is not an object"))
                continue
            missing = [k for k in ("user_id", "item_id", "domain", "rating") if k not in obj]
            if missing:
                issues.append(RecordIssue(line_no, f"missing field '{missing[0]}'"))
                continue
            if obj["domain"] not in DOMAINS:
                issues.append(RecordIssue(line_no, f"field 'domain' must be one of {DOMAINS}"))
                continue
            value = obj["rating"]
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                issues.append(RecordIssue(line_no, "field 'rating' must be a number"))
                continue
            if not 1.0 <= float(value) <= 5.0:
                issues.append(RecordIssue(line_no, f"rating out of range [1, 5]: {value}"))
                continue
            ratings.append(
                Rating(
                    user_id=str(obj["user_id"]),
                    item_id=str(obj["item_id"]),
                    domain=obj["domain"],
                    rating=float(value),
                )
            )
    return ratings, issues
