"""Ingestion: parsing, per-row error reporting, dedupe and normalization."""

import json

import pytest
from hypothesis import given, strategies as st

from crossrec.catalog import (
    Catalog,
    Item,
    clean,
    load_catalog,
    load_ratings,
    normalize_genre,
    save_catalog,
)
from crossrec.errors import TooManyMalformedRows


def _row(item_id, title="T", description="some text", genres=("drama",), domain="source", **extra):
    obj = {
        "id": item_id,
        "title": title,
        "description": description,
        "genres": list(genres),
        "domain": domain,
    }
    obj.update(extra)
    return obj


def _write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def test_load_single_row(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text(
        '{"id": "m1", "title": "Alien", "description": "A crew aboard a deep-space tug '
        'investigates a distress signal.", "genres": ["Horror", "Sci-Fi"], "domain": "source"}\n'
    )
    catalog, issues = load_catalog(p)
    assert issues == []
    assert len(catalog) == 1
    item = catalog.items[0]
    assert item.id == "m1"
    assert item.title == "Alien"
    assert item.genres == ("Horror", "Sci-Fi")  # load does not normalize; clean does
    assert item.domain == "source"


def test_empty_file_yields_empty_catalog(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    catalog, issues = load_catalog(p)
    assert len(catalog) == 0
    assert issues == []


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_catalog(tmp_path / "nope.jsonl")


def test_missing_field_is_reported_not_fatal(tmp_path):
    rows = [_row("a"), _row("b"), _row("c")]
    del rows[1]["description"]
    p = tmp_path / "c.jsonl"
    _write_jsonl(p, rows)
    catalog, issues = load_catalog(p)
    assert [i.id for i in catalog.items] == ["a", "c"]
    assert len(issues) == 1
    assert issues[0].line == 2
    assert "description" in issues[0].reason


def test_unparseable_line_reported_with_line_number(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text(json.dumps(_row("a")) + "\n" + "{not json\n" + json.dumps(_row("b")) + "\n")
    catalog, issues = load_catalog(p)
    assert len(catalog) == 2
    assert issues[0].line == 2


def test_mostly_malformed_large_file_is_fatal(tmp_path):
    # 12 rows, 2 malformed -> 16.7% > 10% with >= 10 rows
    rows = [_row(f"i{k}") for k in range(10)]
    p = tmp_path / "c.jsonl"
    _write_jsonl(p, rows)
    with p.open("a") as fh:
        fh.write("oops\n")
        fh.write(json.dumps({"id": "x"}) + "\n")
    with pytest.raises(TooManyMalformedRows):
        load_catalog(p)


def test_small_files_never_fatal(tmp_path):
    # below the row floor, even 2/3 malformed just reports issues
    p = tmp_path / "c.jsonl"
    p.write_text("junk\nmore junk\n" + json.dumps(_row("a")) + "\n")
    catalog, issues = load_catalog(p)
    assert len(catalog) == 1
    assert len(issues) == 2


def test_acceptable_malformed_fraction_keeps_rows(tmp_path):
    rows = [_row(f"i{k}") for k in range(20)]
    p = tmp_path / "c.jsonl"
    _write_jsonl(p, rows)
    with p.open("a") as fh:
        fh.write("bad row\n")  # 1/21 < 10%
    catalog, issues = load_catalog(p)
    assert len(catalog) == 20
    assert len(issues) == 1


def test_bad_domain_rejected(tmp_path):
    p = tmp_path / "c.jsonl"
    _write_jsonl(p, [_row("a", domain="movie")])
    catalog, issues = load_catalog(p)
    assert len(catalog) == 0
    assert "domain" in issues[0].reason


def test_csv_round(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text(
        "id,title,description,genres,domain\n"
        'm1,Alien,"A crew investigates a signal.",horror|sci-fi,source\n'
        "m2,Heat,A heist thriller.,crime,source\n"
    )
    catalog, issues = load_catalog(p, fmt="csv")
    assert issues == []
    assert [i.id for i in catalog.items] == ["m1", "m2"]
    assert catalog.items[0].genres == ("horror", "sci-fi")


def test_csv_wrong_header_fatal(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("identifier,name\nx,y\n")
    with pytest.raises(TooManyMalformedRows):
        load_catalog(p, fmt="csv")


def test_unknown_format_rejected(tmp_path):
    p = tmp_path / "c.xml"
    p.write_text("<xml/>")
    with pytest.raises(ValueError):
        load_catalog(p, fmt="xml")


def test_save_load_round_trip(tmp_path):
    items = [
        Item("m1", "Alien", "A crew.", ("horror", "sci-fi"), "source"),
        Item("b1", "Дюна", "Пустынная планета.", ("фантастика",), "target"),
    ]
    p = tmp_path / "out.jsonl"
    save_catalog(Catalog(items=items), p)
    loaded, issues = load_catalog(p)
    assert issues == []
    assert loaded.items == items


def test_clean_dedupes_by_id_keeping_first():
    a = Item("m1", "First", "text one", ("drama",), "source")
    b = Item("m1", "Second", "text two", ("comedy",), "source")
    cleaned, stats = clean(Catalog(items=[a, b]))
    assert [i.title for i in cleaned.items] == ["First"]
    assert stats.dropped_duplicate_id == 1
    assert stats.dropped_duplicate == 1


def test_clean_dedupes_by_normalized_title():
    a = Item("m1", "The Matrix", "text", ("sci-fi",), "source")
    b = Item("m2", "  the matrix ", "other", ("sci-fi",), "source")
    cleaned, stats = clean(Catalog(items=[a, b]))
    assert [i.id for i in cleaned.items] == ["m1"]
    assert stats.dropped_duplicate_title == 1


def test_clean_same_id_different_domain_kept():
    a = Item("x1", "Alpha", "text", ("drama",), "source")
    b = Item("x1", "Beta", "text", ("drama",), "target")
    cleaned, stats = clean(Catalog(items=[a, b]))
    assert len(cleaned) == 2
    assert stats.dropped_duplicate == 0


def test_clean_drops_empty_description_and_genres():
    rows = [
        Item("a", "A", "   ", ("drama",), "source"),
        Item("b", "B", "ok", (), "source"),
        Item("c", "C", "ok", ("  ",), "source"),
        Item("d", "D", "ok", ("drama",), "source"),
    ]
    cleaned, stats = clean(Catalog(items=rows))
    assert [i.id for i in cleaned.items] == ["d"]
    assert stats.dropped_missing == 3
    assert stats.items_in == 4 and stats.items_out == 1


def test_clean_normalizes_genres():
    item = Item("a", "A", "ok", ("Science  Fiction", "HORROR", "horror"), "source")
    cleaned, _ = clean(Catalog(items=[item]))
    assert cleaned.items[0].genres == ("science-fiction", "horror")


def test_clean_preserves_non_latin_text():
    item = Item("a", "Сталкер", "Зона хранит тайны.", ("Драма",), "source")
    cleaned, _ = clean(Catalog(items=[item]))
    assert cleaned.items[0].description == "Зона хранит тайны."
    assert cleaned.items[0].genres == ("драма",)


def test_clean_idempotent(mini_data):
    source, _, _ = mini_data
    once, _ = clean(source)
    twice, stats = clean(once)
    assert twice.items == once.items
    assert stats.items_in == stats.items_out


@given(
    st.lists(
        st.tuples(
            st.sampled_from(["a", "b", "c", "d"]),
            st.text(max_size=8),
            st.lists(st.sampled_from(["X Y", "drama", " ", "Noir"]), max_size=3),
        ),
        max_size=12,
    )
)
def test_clean_idempotent_property(rows):
    catalog = Catalog(
        items=[Item(i, f"t{i}{n}", desc, tuple(genres), "source") for n, (i, desc, genres) in enumerate(rows)]
    )
    once, _ = clean(catalog)
    twice, _ = clean(once)
    assert twice.items == once.items


def test_normalize_genre():
    assert normalize_genre("Science Fiction") == "science-fiction"
    assert normalize_genre("  Sci\tFi ") == "sci-fi"
    assert normalize_genre("noir") == "noir"


def test_load_ratings(tmp_path):
    p = tmp_path / "r.jsonl"
    rows = [
        {"user_id": "u1", "item_id": "m1", "domain": "source", "rating": 5},
        {"user_id": "u1", "item_id": "b1", "domain": "target", "rating": 3.5},
        {"user_id": "u2", "item_id": "m9", "domain": "source", "rating": 6},
        {"user_id": "u2", "item_id": "m9", "domain": "source", "rating": True},
        {"user_id": "u2", "item_id": "m9", "domain": "elsewhere", "rating": 2},
    ]
    p.write_text("".join(json.dumps(r) + "\n" for r in rows))
    ratings, issues = load_ratings(p)
    assert [(r.user_id, r.rating) for r in ratings] == [("u1", 5.0), ("u1", 3.5)]
    assert len(issues) == 3


def test_load_ratings_empty(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text("")
    ratings, issues = load_ratings(p)
    assert ratings == [] and issues == []


def test_domain_counts(mini_data):
    source, target, _ = mini_data
    assert source.domain_counts()["source"] == len(source)
    assert target.domain_counts()["target"] == len(target)
