from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpl.data import (
    Interaction,
    filter_and_binarize,
    generate_synthetic,
    ingest,
    load_dataset,
    save_dataset,
    temporal_split,
    validation_split,
    write_interactions,
)
from fpl.errors import ConfigError, ParseError


def write(tmp_path, text, name="log.tsv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def records_for(user, n, t0=0, prefix="i"):
    return [Interaction(user, f"{prefix}{k}", t0 + k) for k in range(n)]


# --- ingest -------------------------------------------------------------------


def test_ingest_two_lines(tmp_path):
    recs = ingest(write(tmp_path, "u1\ti1\t10\nu2\ti9\t20\n"))
    assert recs == [Interaction("u1", "i1", 10), Interaction("u2", "i9", 20)]


def test_ingest_bad_timestamp_reports_line(tmp_path):
    with pytest.raises(ParseError) as exc:
        ingest(write(tmp_path, "u0\ti0\t1\nu1\ti9\tabc\n"))
    assert exc.value.line == 2 and "line 2" in str(exc.value)


def test_ingest_skips_header(tmp_path):
    assert len(ingest(write(tmp_path, "# user\titem\tts\nu\ta\t1\nu\tb\t2\nv\ta\t3\n"))) == 3


def test_ingest_empty_file(tmp_path):
    assert ingest(write(tmp_path, "")) == []


@pytest.mark.parametrize("line", ["u\ti", "u\ti\t1\t2", "\ti\t1", "u\ti\t-5"])
def test_ingest_malformed(tmp_path, line):
    with pytest.raises(ParseError):
        ingest(write(tmp_path, line + "\n"))


def test_ingest_round_trip(tmp_path):
    recs = generate_synthetic(10, 20, 2, 0.2, seed=1)
    write_interactions(tmp_path / "s.tsv", recs)
    assert ingest(tmp_path / "s.tsv") == recs


# --- filter -------------------------------------------------------------------


def test_filter_boundary_is_strict():
    recs = records_for("a", 20) + records_for("b", 21)
    kept = filter_and_binarize(recs, 20)
    assert {r.user for r in kept} == {"b"} and len(kept) == 21


def test_filter_counts_distinct_items():
    recs = records_for("a", 20) + [Interaction("a", "i0", 100)]
    assert filter_and_binarize(recs, 20) == []


def test_dedup_keeps_earliest():
    recs = [Interaction("u", "x", 9), Interaction("u", "x", 5), Interaction("u", "y", 7)]
    assert sorted(filter_and_binarize(recs, 0)) == [Interaction("u", "x", 5), Interaction("u", "y", 7)]


def test_negative_threshold_rejected():
    with pytest.raises(ConfigError):
        filter_and_binarize([], -1)


# --- splits -------------------------------------------------------------------


def test_ten_records_split_eight_two():
    ds = temporal_split(records_for("u", 10), 0.8)
    assert len(ds.train[0]) == 8 and len(ds.test[0]) == 2
    assert max(t for _, t in ds.train[0]) <= min(t for _, t in ds.test[0])


def test_two_records_split_one_one():
    ds = temporal_split(records_for("u", 2), 0.8)
    assert len(ds.train[0]) == 1 and len(ds.test[0]) == 1


def test_single_record_user_dropped(caplog):
    ds = temporal_split(records_for("a", 1) + records_for("b", 5), 0.8)
    assert ds.user_keys == ("b",)
    assert "dropped 1 users" in caplog.text


def test_ties_broken_by_item_index():
    recs = [Interaction("u", k, 5) for k in ("c", "a", "b", "d", "e")]
    ds = temporal_split(recs, 0.8)
    assert [i for i, _ in ds.train[0]] == [0, 1, 2, 3] and [i for i, _ in ds.test[0]] == [4]


def test_test_only_items_stay_in_catalog():
    recs = records_for("u", 4) + [Interaction("u", "late", 99)]
    ds = temporal_split(recs, 0.8)
    assert "late" in ds.item_keys
    assert ds.item_keys.index("late") in ds.test_positives[0]


def test_x_plus_recount():
    ds = temporal_split(generate_synthetic(40, 60, 3, 0.1, seed=3), 0.8)
    assert ds.x_plus == sum(len(r) for r in ds.train) == sum(len(p) for p in ds.train_positives)


def test_validation_of_eight_records():
    ds = validation_split(temporal_split(records_for("u", 10), 0.8))
    assert len(ds.train[0]) == 6 and len(ds.validation[0]) == 2 and len(ds.test[0]) == 2


def test_validation_split_twice_rejected():
    ds = validation_split(temporal_split(records_for("u", 10), 0.8))
    with pytest.raises(ConfigError):
        validation_split(ds)


@pytest.mark.parametrize("f", [0.0, 1.0, 1.5])
def test_bad_fraction(f):
    with pytest.raises(ConfigError):
        temporal_split(records_for("u", 4), f)


log_strategy = st.lists(
    st.tuples(st.integers(0, 6), st.integers(0, 15), st.integers(0, 50)),
    min_size=1,
    max_size=80,
)


def check_partition(raw, ds):
    deduped = filter_and_binarize(raw, 0)
    by_user = {}
    for r in deduped:
        by_user.setdefault(r.user, set()).add((r.item, r.timestamp))
    for u, key in enumerate(ds.user_keys):
        sides = [ds.train[u], ds.validation[u], ds.test[u]]
        as_keys = [{(ds.item_keys[i], t) for i, t in s} for s in sides]
        assert set.union(*as_keys) == by_user[key]
        assert sum(len(s) for s in sides) == len(by_user[key])
        items = [{i for i, _ in s} for s in sides]
        assert not (items[0] & items[1] or items[0] & items[2] or items[1] & items[2])
        order = [(t, i) for s in sides for i, t in s]
        assert order == sorted(order)
        assert len(ds.train[u]) >= 1 and len(ds.test[u]) >= 1


@settings(max_examples=300, deadline=None)
@given(log_strategy)
def test_three_way_split_is_temporal_partition(rows):
    raw = [Interaction(f"u{u}", f"i{i}", t) for u, i, t in rows]
    ds = validation_split(temporal_split(filter_and_binarize(raw, 0), 0.8), 0.8)
    check_partition(raw, ds)


@settings(max_examples=100, deadline=None)
@given(log_strategy)
def test_dense_indices_are_contiguous_and_stable(rows):
    raw = [Interaction(f"u{u}", f"i{i}", t) for u, i, t in rows]
    a = temporal_split(filter_and_binarize(raw, 0))
    b = temporal_split(filter_and_binarize(list(reversed(raw)), 0))
    assert a == b
    seen = {i for side in (a.train, a.test) for recs in side for i, _ in recs}
    assert seen <= set(range(a.num_items))


# --- synthetic ----------------------------------------------------------------


def test_synthetic_deterministic():
    assert generate_synthetic(30, 40, 4, 0.1, 1.0, seed=9) == generate_synthetic(30, 40, 4, 0.1, 1.0, seed=9)
    assert generate_synthetic(30, 40, 4, 0.1, 1.0, seed=9) != generate_synthetic(30, 40, 4, 0.1, 1.0, seed=10)


def test_synthetic_near_zero_density():
    assert len(generate_synthetic(50, 50, 2, 1e-6, seed=0)) <= 2


def test_synthetic_timestamps_increase_per_user():
    last = {}
    for r in generate_synthetic(20, 30, 2, 0.2, seed=4):
        assert r.timestamp > last.get(r.user, -1)
        last[r.user] = r.timestamp


def test_synthetic_density():
    recs = generate_synthetic(300, 200, 4, 0.05, 0.0, seed=5)
    assert len(recs) / (300 * 200) == pytest.approx(0.05, rel=0.05)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_synthetic_rank_frequency_slope(seed):
    recs = generate_synthetic(2000, 50, 8, 0.05, 1.2, seed=seed)
    counts = np.array(sorted(Counter(r.item for r in recs).values(), reverse=True), dtype=float)
    ranks = np.arange(1, len(counts) + 1)
    slope = np.polyfit(np.log(ranks), np.log(counts), 1)[0]
    assert abs(slope + 1.2) <= 0.3


@pytest.mark.parametrize("kw", [dict(density=0.0), dict(density=1.0), dict(num_items=1), dict(popularity_skew=-1.0)])
def test_synthetic_bad_parameters(kw):
    args = dict(num_users=5, num_items=10, latent_dim=2, density=0.1, popularity_skew=1.0)
    args.update(kw)
    with pytest.raises(ConfigError):
        generate_synthetic(**args)


# --- persistence --------------------------------------------------------------


@pytest.mark.parametrize("with_validation", [False, True])
def test_save_load_round_trip(tmp_path, with_validation):
    ds = temporal_split(generate_synthetic(30, 40, 3, 0.15, seed=6), 0.8)
    if with_validation:
        ds = validation_split(ds)
    save_dataset(ds, tmp_path / "ds", {"note": "x"})
    assert load_dataset(tmp_path / "ds") == ds


def test_load_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope")


def test_characteristics():
    ds = temporal_split(records_for("a", 10) + records_for("b", 5, prefix="j"), 0.8)
    c = ds.characteristics()
    assert c["users"] == 2 and c["items"] == 15 and c["x_plus"] == 12
    assert c["density_pct"] == pytest.approx(100 * 12 / 30)
