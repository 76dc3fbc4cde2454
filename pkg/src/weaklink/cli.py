"""Command-line interface: scan, gen and diff subcommands.

Exit codes: 0 success, 1 fatal (bad input/config), 2 partial success
(provider degradation; findings are complete but downloads or domain
lookups fell back to unknown).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .errors import FixtureError, PlanError, ScannerError
from .pipeline import ScanOptions, diff_findings, run_scan, write_reports
from .signals import AnalyzerConfig
from .synth import GenerationPlan, generate

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weaklink", description="Registry-metadata weak link scanner")
    parser.add_argument("--version", action="version", version=f"weaklink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="scan a registry snapshot and write reports")
    scan.add_argument("--input", required=True, help="snapshot path (file or directory)")
    scan.add_argument("--format", choices=("bulk", "ndjson", "dir"), default=None, help="snapshot layout (default: autodetect)")
    scan.add_argument("--config", default=None, help="JSON config file with analyzer thresholds")
    scan.add_argument("--out", default="weaklink-report", help="output directory")
    scan.add_argument("--domains-fixture", default=None, help="JSONL domain status fixture")
    scan.add_argument("--downloads-fixture", default=None, help="JSONL downloads fixture")
    scan.add_argument("--live", action="store_true", help="use live DNS/HTTP providers where no fixture is given")
    scan.add_argument("--rate-limit", type=float, default=10.0, help="live requests per second")
    scan.add_argument("--downloads-url", default="https://api.npmjs.org", help="base URL for the live downloads endpoint")
    scan.add_argument("--dns-resolver", default="8.8.8.8:53", help="resolver host:port for live domain checks")
    scan.add_argument("--top-percent", type=float, default=None, help="ranking percentile for W4/W5/W6")
    scan.add_argument("--inactivity-years", type=float, default=None, help="inactivity window in years")
    scan.add_argument("--popular-n", type=int, default=10_000, help="popular sample size per ranking")
    scan.add_argument("--dep-kinds", default="runtime", help="comma list of dependency kinds (runtime,dev,peer,optional)")
    scan.add_argument("--unsafe-full-output", action="store_true", help="also write full member lists")
    scan.add_argument("--jobs", type=int, default=os.cpu_count(), help="worker pool size")

    gen = sub.add_parser("gen", help="generate a synthetic snapshot with a ground-truth manifest")
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--packages", type=int, default=10_000)
    gen.add_argument("--out", default="weaklink-corpus", help="output directory")
    gen.add_argument("--format", choices=("bulk", "ndjson", "dir"), default="ndjson", help="snapshot layout to emit")
    gen.add_argument("--plan", default=None, help="JSON file overriding generation plan fields")

    diff = sub.add_parser("diff", help="diff two findings files")
    diff.add_argument("old")
    diff.add_argument("new")
    return parser


def _load_config(args: argparse.Namespace) -> AnalyzerConfig:
    data: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    cfg = AnalyzerConfig.from_dict(data)
    overrides: dict = {}
    if args.top_percent is not None:
        overrides["top_percent"] = args.top_percent
    if args.inactivity_years is not None:
        overrides["inactivity_days"] = round(args.inactivity_years * 365)
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


def cmd_scan(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args)
        dep_kinds = tuple(k.strip() for k in args.dep_kinds.split(",") if k.strip())
        resolver_host, _, resolver_port = args.dns_resolver.partition(":")
        options = ScanOptions(
            input_path=args.input,
            layout=args.format,
            config=cfg,
            dep_kinds=dep_kinds,
            popular_n=args.popular_n,
            domains_fixture=args.domains_fixture,
            downloads_fixture=args.downloads_fixture,
            live=args.live,
            rate_limit=args.rate_limit,
            downloads_base_url=args.downloads_url,
            dns_resolver=(resolver_host, int(resolver_port or 53)),
            jobs=args.jobs,
            unsafe_full_output=args.unsafe_full_output,
        )
        result = run_scan(options)
        paths = write_reports(result, args.out, unsafe_full_output=args.unsafe_full_output)
    except (OSError, ValueError, FixtureError, ScannerError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    if result.provider_warnings:
        print(f"warning: {result.provider_warnings} provider lookups degraded to unknown", file=sys.stderr)
        return 2
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        overrides: dict = {}
        if args.plan:
            with open(args.plan, "r", encoding="utf-8") as fh:
                overrides = json.load(fh)
        overrides["seed"] = args.seed
        overrides["package_count"] = args.packages
        plan = GenerationPlan.from_dict(overrides)
        corpus = generate(plan)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        suffix = {"ndjson": "snapshot.ndjson", "bulk": "snapshot.json", "dir": "snapshot"}[args.format]
        snapshot = corpus.write_snapshot(out / suffix, layout=args.format)
        domains, downloads = corpus.write_fixtures(out)
        manifest = corpus.write_manifest(out / "manifest.json")
    except (OSError, PlanError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for label, path in (("snapshot", snapshot), ("domains", domains), ("downloads", downloads), ("manifest", manifest)):
        print(f"{label}: {path}")
    return 0


def cmd_diff(args: argparse.Namespace) -> int:
    try:
        added, removed = diff_findings(args.old, args.new)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for line in removed:
        print(f"- {line}")
    for line in added:
        print(f"+ {line}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "scan":
        return cmd_scan(args)
    if args.command == "gen":
        return cmd_gen(args)
    if args.command == "diff":
        return cmd_diff(args)
    parser.error(f"unknown command {args.command}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
