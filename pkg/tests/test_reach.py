"""Index construction and reach metrics against brute-force oracles."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from weaklink.errors import EmptyInputError, UnknownMaintainerError
from weaklink.reach import (
    build_dependents_index,
    build_maintainer_index,
    dump_dependents_index,
    load_dependents_index,
    maintainer_reach,
    package_reach,
    top_n,
    top_percent,
)

from conftest import make_corpus, make_record, person, random_corpus


def test_single_edge():
    corpus = make_corpus([make_record("a", dependencies={"b": "*"}), make_record("b")])
    index = build_dependents_index(corpus)
    assert index["b"] == {"a"}
    assert index["a"] == set()


def test_self_edge_dropped():
    corpus = make_corpus([make_record("a", dependencies={"a": "*"})])
    index = build_dependents_index(corpus)
    assert index["a"] == set()


def test_unknown_dependee_still_indexed():
    corpus = make_corpus([make_record("a", dependencies={"ghost": "*"})])
    index = build_dependents_index(corpus)
    assert index["ghost"] == {"a"}


def test_dep_kinds_selectable():
    corpus = make_corpus([make_record("a", dependencies={"b": "*"}, dev_dependencies={"c": "*"}), make_record("b"), make_record("c")])
    runtime_only = build_dependents_index(corpus)
    assert runtime_only["c"] == set()
    both = build_dependents_index(corpus, dep_kinds=("runtime", "dev"))
    assert both["c"] == {"a"}
    with pytest.raises(ValueError):
        build_dependents_index(corpus, dep_kinds=())


def brute_force_index(corpus, kinds=("runtime",)):
    index = {rec.name: set() for rec in corpus.records}
    for rec in corpus.records:
        for kind in kinds:
            for dep in rec.dependency_map(kind):
                if dep != rec.name:
                    index.setdefault(dep, set()).add(rec.name)
    return index


def test_index_matches_brute_force_on_random_corpora():
    for seed in range(10):
        corpus = random_corpus(seed=seed, size=150)
        assert build_dependents_index(corpus) == brute_force_index(corpus)


def test_edge_count_invariant():
    for seed in (2, 7):
        corpus = random_corpus(seed=seed, size=100)
        index = build_dependents_index(corpus)
        edges = sum(1 for rec in corpus.records for dep in rec.dependencies if dep != rec.name)
        assert sum(len(v) for v in index.values()) == edges


def test_maintainer_index_and_reach():
    m = person(email="m@x.io")
    corpus = make_corpus(
        [
            make_record("b", maintainers=(m,)),
            make_record("a", dependencies={"b": "*"}),
            make_record("c", dependencies={"b": "*"}),
        ]
    )
    mindex = build_maintainer_index(corpus)
    dindex = build_dependents_index(corpus)
    assert mindex["m@x.io"].owned_packages == frozenset({"b"})
    assert maintainer_reach("m@x.io", mindex, dindex) == 2


def test_reach_unique_union():
    m = person(email="m@x.io")
    corpus = make_corpus(
        [
            make_record("b", maintainers=(m,)),
            make_record("d", maintainers=(m,)),
            make_record("a", dependencies={"b": "*", "d": "*"}),
        ]
    )
    mindex = build_maintainer_index(corpus)
    dindex = build_dependents_index(corpus)
    assert maintainer_reach("m@x.io", mindex, dindex) == 1


def test_reach_exclude_own_flag():
    m = person(email="m@x.io")
    corpus = make_corpus(
        [
            make_record("b", maintainers=(m,)),
            make_record("d", maintainers=(m,), dependencies={"b": "*"}),
            make_record("a", dependencies={"b": "*"}),
        ]
    )
    mindex = build_maintainer_index(corpus)
    dindex = build_dependents_index(corpus)
    assert maintainer_reach("m@x.io", mindex, dindex) == 2
    assert maintainer_reach("m@x.io", mindex, dindex, exclude_own=True) == 1


def test_unknown_maintainer_raises():
    with pytest.raises(UnknownMaintainerError):
        maintainer_reach("nobody@x.io", {}, {})


def test_reach_matches_brute_force_and_bounds():
    for seed in range(10):
        corpus = random_corpus(seed=seed, size=150)
        mindex = build_maintainer_index(corpus)
        dindex = build_dependents_index(corpus)
        for key, info in mindex.items():
            union = set()
            for pkg in info.owned_packages:
                union |= dindex.get(pkg, set())
            got = maintainer_reach(key, mindex, dindex)
            assert got == len(union)
            sizes = [len(dindex.get(pkg, set())) for pkg in info.owned_packages]
            assert got <= sum(sizes)
            assert got >= max(sizes)


def test_maintainer_last_activity_is_max():
    from datetime import timedelta

    from conftest import REF

    m = person(email="m@x.io")
    corpus = make_corpus(
        [
            make_record("old", maintainers=(m,), last_modified=REF - timedelta(days=900)),
            make_record("new", maintainers=(m,), last_modified=REF),
        ]
    )
    mindex = build_maintainer_index(corpus)
    assert mindex["m@x.io"].last_activity == REF


def test_package_reach_unknown_downloads():
    corpus = make_corpus([make_record("a")])
    index = build_dependents_index(corpus)
    metrics = package_reach("a", index, downloads=lambda name: None)
    assert metrics.direct_dependents == 0
    assert metrics.downloads_12mo is None
    metrics = package_reach("a", index, downloads=lambda name: 53_000)
    assert metrics.downloads_12mo == 53_000


# --- top_percent / top_n ------------------------------------------------------


def test_top_percent_distinct_scores():
    subjects = [(f"s{i:03d}", i) for i in range(100)]
    flagged = top_percent(subjects, 1)
    assert [name for name, _ in flagged] == ["s099"]


def test_top_percent_closed_ties():
    subjects = [("a", 5), ("b", 5), ("c", 5)] + [(f"x{i}", 1) for i in range(97)]
    flagged = top_percent(subjects, 1)
    assert sorted(name for name, _ in flagged) == ["a", "b", "c"]


def test_top_percent_validation():
    with pytest.raises(EmptyInputError):
        top_percent([], 1)
    with pytest.raises(ValueError):
        top_percent([("a", 1)], 0)
    with pytest.raises(ValueError):
        top_percent([("a", 1)], 101)


def test_top_n_tie_break_lexicographic():
    subjects = [("b", 2), ("a", 2), ("c", 1)]
    assert [name for name, _ in top_n(subjects, 1)] == ["a", "b"]


def independent_top_percent(subjects, percent):
    # Sort-based oracle with an explicit tie walk.
    import math

    ranked = sorted(subjects, key=lambda s: (-s[1], s[0]))
    k = math.ceil(len(subjects) * percent / 100)
    cutoff = ranked[k - 1][1] if k <= len(ranked) else None
    out = ranked[:k]
    for item in ranked[k:]:
        if item[1] == cutoff:
            out.append(item)
        else:
            break
    return out


@given(
    st.lists(st.tuples(st.text("ab", min_size=1, max_size=4), st.integers(0, 50)), min_size=1, max_size=60),
    st.sampled_from([1, 5, 10, 50, 100]),
)
def test_top_percent_matches_oracle_and_permutation_invariant(items, percent):
    subjects = [(f"{name}-{i}", score) for i, (name, score) in enumerate(items)]
    got = top_percent(subjects, percent)
    assert got == independent_top_percent(subjects, percent)
    shuffled = list(reversed(subjects))
    assert top_percent(shuffled, percent) == got


def test_index_round_trip(tmp_path):
    corpus = random_corpus(seed=11, size=60)
    index = build_dependents_index(corpus)
    path = tmp_path / "index.jsonl"
    dump_dependents_index(index, path)
    assert load_dependents_index(path) == index
