"""Scan orchestration and canonical report emission.

Pipeline order: ingest -> full-corpus dependents index -> exclusions ->
rebuilt indexes over the filtered corpus -> analyzers -> combinations.
All report files are canonical (sorted keys, sorted records, trailing
newline) and contain no wall-clock values, so reruns over identical inputs
and fixtures are byte-identical.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .combinations import (
    AttackReport,
    Combination,
    KeywordHit,
    PopularSample,
    attack_candidates,
    combination_table,
    keyword_hunt,
    popular_sample,
)
from .exclusions import ExclusionVerdict, apply_exclusions
from .ingest import Corpus, load_corpus
from .providers import (
    CachingDomainProvider,
    EmptyDomainProvider,
    EmptyDownloadsProvider,
    FixtureDomainProvider,
    FixtureDownloadsProvider,
    LiveDnsDomainProvider,
    LiveDownloadsProvider,
    PrefetchedDownloads,
    RateLimiter,
)
from .reach import build_dependents_index, build_maintainer_index
from .signals import (
    EVIDENCE_SCHEMAS,
    AnalyzerConfig,
    WeakLinkFinding,
    analyze_w1,
    analyze_w2,
    analyze_w3,
    analyze_w4,
    analyze_w5,
    analyze_w6,
    is_inactive,
    mean_maintainers,
)

logger = logging.getLogger(__name__)

FINDINGS_SCHEMA_VERSION = 1
MEMBER_SAMPLE_CAP = 100


@dataclass
class ScanOptions:
    input_path: str | Path
    layout: str | None = None  # autodetect when None
    config: AnalyzerConfig = field(default_factory=AnalyzerConfig)
    dep_kinds: tuple[str, ...] = ("runtime",)
    popular_n: int = 10_000
    domains_fixture: str | Path | None = None
    downloads_fixture: str | Path | None = None
    live: bool = False
    rate_limit: float = 10.0
    downloads_base_url: str = "https://api.npmjs.example"
    dns_resolver: tuple[str, int] = ("8.8.8.8", 53)
    jobs: int | None = None
    unsafe_full_output: bool = False


@dataclass
class ScanResult:
    corpus: Corpus
    filtered: Corpus
    verdicts: list[ExclusionVerdict]
    config: AnalyzerConfig
    findings: list[WeakLinkFinding]
    domain_histogram: dict[str, int]
    popular: PopularSample
    combinations: list[Combination]
    keyword_hits: list[KeywordHit]
    attack: AttackReport
    summary: dict
    provider_warnings: int


def _make_providers(options: ScanOptions):
    if options.domains_fixture:
        domains = FixtureDomainProvider(options.domains_fixture)
    elif options.live:
        domains = LiveDnsDomainProvider(resolver=options.dns_resolver, limiter=RateLimiter(options.rate_limit))
    else:
        domains = EmptyDomainProvider()
    if options.downloads_fixture:
        downloads = FixtureDownloadsProvider(options.downloads_fixture)
    elif options.live:
        downloads = LiveDownloadsProvider(options.downloads_base_url, rate_limit=options.rate_limit)
    else:
        downloads = EmptyDownloadsProvider()
    return CachingDomainProvider(domains), downloads


def run_scan(options: ScanOptions) -> ScanResult:
    corpus = load_corpus(options.input_path, layout=options.layout, jobs=options.jobs)
    pre_index = build_dependents_index(corpus, options.dep_kinds)
    filtered, verdicts = apply_exclusions(corpus, pre_index, options.config.license_denylist)

    domains, downloads = _make_providers(options)

    if not filtered.records:
        summary = _build_summary(
            options, corpus, filtered, verdicts, options.config, [], {}, None, [], [], AttackReport((), ()), {}, 0
        )
        return ScanResult(
            corpus=corpus,
            filtered=filtered,
            verdicts=verdicts,
            config=options.config,
            findings=[],
            domain_histogram={},
            popular=PopularSample(members=frozenset(), by_dependents=0, by_downloads=0),
            combinations=[],
            keyword_hits=[],
            attack=AttackReport((), ()),
            summary=summary,
            provider_warnings=0,
        )

    cfg = options.config.resolved(filtered)
    dindex = build_dependents_index(filtered, options.dep_kinds)
    mindex = build_maintainer_index(filtered)

    if isinstance(downloads, LiveDownloadsProvider):
        # One bounded-concurrency pass up front; every later lookup is a
        # lock-free map read and the per-run query count stays exact.
        counts = downloads.fetch_many([rec.name for rec in filtered.records], concurrency=options.jobs or 4)
        downloads = PrefetchedDownloads(counts, warnings=downloads.warnings)

    w1_findings, histogram = analyze_w1(filtered, mindex, domains, cfg)
    findings = list(w1_findings)
    findings += analyze_w2(filtered, cfg)
    findings += analyze_w3(filtered, mindex, cfg)
    findings += analyze_w4(filtered, cfg)
    findings += analyze_w5(filtered, cfg)
    findings += analyze_w6(filtered, mindex, dindex, cfg)
    findings.sort(key=WeakLinkFinding.sort_key)

    popular = popular_sample(filtered, dindex, downloads, options.popular_n)
    combos = combination_table(findings, scope=popular)
    hits = keyword_hunt(filtered, cfg)
    attack = attack_candidates(filtered, findings, dindex, downloads, scope=None)

    stale_maintainers = sum(1 for info in mindex.values() if is_inactive(info.last_activity, cfg))
    warnings = domains.warnings + getattr(downloads, "warnings", 0)
    summary = _build_summary(
        options,
        corpus,
        filtered,
        verdicts,
        cfg,
        findings,
        histogram,
        popular,
        combos,
        hits,
        attack,
        {"maintainers": len(mindex), "stale_maintainers": stale_maintainers},
        warnings,
    )
    return ScanResult(
        corpus=corpus,
        filtered=filtered,
        verdicts=verdicts,
        config=cfg,
        findings=findings,
        domain_histogram=histogram,
        popular=popular,
        combinations=combos,
        keyword_hits=hits,
        attack=attack,
        summary=summary,
        provider_warnings=warnings,
    )


def _build_summary(
    options: ScanOptions,
    corpus: Corpus,
    filtered: Corpus,
    verdicts: list[ExclusionVerdict],
    cfg: AnalyzerConfig,
    findings: list[WeakLinkFinding],
    histogram: dict[str, int],
    popular: PopularSample | None,
    combos: list[Combination],
    hits: list[KeywordHit],
    attack: AttackReport,
    maintainer_stats: dict,
    warnings: int,
) -> dict:
    n_filtered = len(filtered.records)
    excluded = [v for v in verdicts if v.excluded]
    by_reason: dict[str, int] = {}
    for v in excluded:
        for reason in v.reasons:
            by_reason[reason] = by_reason.get(reason, 0) + 1

    by_signal: dict[str, list[WeakLinkFinding]] = {}
    for f in findings:
        by_signal.setdefault(f.signal, []).append(f)

    with_contrib = sum(1 for rec in filtered.records if rec.contributors)
    with_maints = sum(1 for rec in filtered.records if rec.maintainers)
    maintainer_count = maintainer_stats.get("maintainers", 0)

    def signal_entry(signal: str) -> dict:
        entries = by_signal.get(signal, [])
        pkg_subjects = {f.subject_id for f in entries if f.subject_kind == "package"}
        maint_subjects = {f.subject_id for f in entries if f.subject_kind == "maintainer"}
        if signal == "W5":
            population = with_contrib
        elif signal == "W4":
            population = with_maints
        elif signal == "W6":
            population = maintainer_count
        else:
            population = n_filtered
        subjects = len(maint_subjects) if signal == "W6" else len(pkg_subjects)
        entry = {
            "findings": len(entries),
            "package_subjects": len(pkg_subjects),
            "population": population,
            "rate": (subjects / population) if population else 0.0,
        }
        if signal == "W6":
            entry["maintainer_subjects"] = len(maint_subjects)
        return entry

    unique_domains = sum(1 for count in histogram.values() if count == 1)
    summary = {
        "tool": {"name": "weaklink", "version": __version__},
        "input": {
            "path": str(options.input_path),
            "digest": corpus.digest,
            "ingest": corpus.stats.to_dict(),
        },
        "config": {
            **cfg.to_dict(),
            "dep_kinds": list(options.dep_kinds),
            "popular_n": options.popular_n,
        },
        "corpus": {
            "raw": corpus.stats.total,
            "parsed": len(corpus.records),
            "excluded": {"total": len(excluded), "by_reason": dict(sorted(by_reason.items()))},
            "filtered": n_filtered,
        },
        "registry_stats": {
            "mean_maintainers_per_package": mean_maintainers(filtered),
            "contributor_listing_share": (with_contrib / n_filtered) if n_filtered else 0.0,
            "contributor_listing_count": with_contrib,
            "inactive_package_share": signal_entry("W3_inactive_pkg")["rate"],
            "maintainer_count": maintainer_count,
            "stale_maintainer_count": maintainer_stats.get("stale_maintainers", 0),
            "inactive_maintainer_share": (
                maintainer_stats.get("stale_maintainers", 0) / maintainer_count if maintainer_count else 0.0
            ),
            "unique_domain_share": (unique_domains / len(histogram)) if histogram else 0.0,
        },
        "signals": {signal: signal_entry(signal) for signal in sorted(EVIDENCE_SCHEMAS)},
        "popular_sample": popular.to_dict() if popular else None,
        "combinations": {c.combination_id: c.count for c in combos},
        "pipelines": {
            "expired_domain_hijack": len(attack.hijackable),
            "overloaded_inactive_takeover": len(attack.takeover_candidates),
        },
        "keyword_hunt": {"packages": len({h.package for h in hits})},
        "provider_warnings": warnings,
    }
    return summary


# --- canonical writers ----------------------------------------------------


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def findings_header() -> dict:
    return {
        "kind": "header",
        "schema_version": FINDINGS_SCHEMA_VERSION,
        "tool": "weaklink",
        "evidence_schemas": {signal: sorted(keys) for signal, keys in EVIDENCE_SCHEMAS.items()},
    }


def write_reports(result: ScanResult, out_dir: str | Path, unsafe_full_output: bool = False) -> dict[str, Path]:
    """Write summary, findings, exclusions and the combination report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    paths["summary"] = out / "summary.json"
    _dump_json(paths["summary"], result.summary)

    paths["findings"] = out / "findings.jsonl"
    with open(paths["findings"], "w", encoding="utf-8") as fh:
        fh.write(json.dumps(findings_header(), sort_keys=True))
        fh.write("\n")
        for finding in result.findings:
            fh.write(json.dumps(finding.to_dict(), sort_keys=True))
            fh.write("\n")

    paths["exclusions"] = out / "exclusions.jsonl"
    with open(paths["exclusions"], "w", encoding="utf-8") as fh:
        for verdict in sorted(result.verdicts, key=lambda v: v.package_id):
            fh.write(json.dumps(verdict.to_dict(), sort_keys=True))
            fh.write("\n")

    combo_payload = {
        "combinations": [
            {
                "id": c.combination_id,
                "count": c.count,
                "members_sample": sorted(c.members)[:MEMBER_SAMPLE_CAP],
            }
            for c in result.combinations
        ],
        "pipelines": {
            "expired_domain_hijack": {
                "count": len(result.attack.hijackable),
                "rows_sample": [
                    {
                        "package": row.package,
                        "maintainer_emails": list(row.maintainer_emails),
                        "domains": list(row.domains),
                        "dependents": row.dependents,
                        "downloads": row.downloads,
                    }
                    for row in result.attack.hijackable[:MEMBER_SAMPLE_CAP]
                ],
            },
            "overloaded_inactive_takeover": {
                "count": len(result.attack.takeover_candidates),
                "rows_sample": [
                    {
                        "package": row.package,
                        "maintainer_key": row.maintainer_key,
                        "reach": row.reach,
                        "dependents": row.dependents,
                        "downloads": row.downloads,
                    }
                    for row in result.attack.takeover_candidates[:MEMBER_SAMPLE_CAP]
                ],
            },
        },
        "keyword_hunt": {
            "count": len({h.package for h in result.keyword_hits}),
            "hits_sample": [
                {
                    "package": h.package,
                    "script_key": h.script_key,
                    "tokens": list(h.tokens),
                    "category": h.pattern.category.value,
                }
                for h in result.keyword_hits[:MEMBER_SAMPLE_CAP]
            ],
        },
        "popular_sample": result.popular.to_dict() if result.popular else None,
    }
    paths["combinations"] = out / "combinations.json"
    _dump_json(paths["combinations"], combo_payload)

    if unsafe_full_output:
        paths["combination_members"] = out / "combination_members.jsonl"
        with open(paths["combination_members"], "w", encoding="utf-8") as fh:
            for combo in result.combinations:
                for member in sorted(combo.members):
                    fh.write(json.dumps({"id": combo.combination_id, "member": member}, sort_keys=True))
                    fh.write("\n")
        paths["popular_members"] = out / "popular_members.jsonl"
        with open(paths["popular_members"], "w", encoding="utf-8") as fh:
            for member in sorted(result.popular.members):
                fh.write(json.dumps({"member": member}, sort_keys=True))
                fh.write("\n")
    return paths


def read_findings(path: str | Path) -> tuple[dict, list[str]]:
    """Read a findings JSONL file: (header, canonical finding lines)."""
    header: dict | None = None
    lines: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            if header is None:
                header = json.loads(raw)
                if header.get("kind") != "header":
                    raise ValueError(f"{path}: missing findings header")
                continue
            lines.append(raw)
    if header is None:
        raise ValueError(f"{path}: empty findings file")
    return header, lines


def diff_findings(path_a: str | Path, path_b: str | Path) -> tuple[list[str], list[str]]:
    """Added/removed finding lines between two scans; raises on schema mismatch."""
    header_a, lines_a = read_findings(path_a)
    header_b, lines_b = read_findings(path_b)
    if header_a.get("schema_version") != header_b.get("schema_version"):
        raise ValueError(
            f"schema mismatch: {header_a.get('schema_version')} vs {header_b.get('schema_version')}"
        )
    set_a, set_b = set(lines_a), set(lines_b)
    added = sorted(set_b - set_a)
    removed = sorted(set_a - set_b)
    return added, removed
