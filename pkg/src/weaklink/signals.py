"""The six weak-link signal analyzers.

Each analyzer is a pure function over an immutable corpus plus shared
indexes: same inputs give byte-identical sorted findings. Thresholds are
never hard-coded; everything tunable lives in ``AnalyzerConfig``.

Signals:
  W1  maintainer email domain available for registration (account takeover)
  W2  package runs an install-time lifecycle script
  W3  unmaintained: inactive package / inactive maintainers / stale deprecation
  W4  unusually many maintainers (top percentile by maintainer count)
  W5  maintainer-to-contributor imbalance (bottom percentile by ratio)
  W6  overloaded maintainer (top percentile by maintainer reach)
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from enum import Enum
from typing import TYPE_CHECKING

from .exclusions import DEFAULT_LICENSE_DENYLIST
from .ingest import Corpus, extract_email_domain, format_timestamp, parse_timestamp
from .reach import DependentsIndex, MaintainerIndex, maintainer_reach, top_percent

if TYPE_CHECKING:
    from .providers import DomainStatusProvider

DEFAULT_SUSPICIOUS_TOKENS = (
    "curl",
    "wget",
    "nc",
    "dig",
    "/etc/shadow",
    "/etc/passwd",
    ".ssh",
    "chmod +x",
    "rm -rf",
    "bash -i",
    "/dev/tcp",
)

SIGNALS = (
    "W1",
    "W2",
    "W3_inactive_pkg",
    "W3_inactive_maintainer",
    "W3_deprecated",
    "W4",
    "W5",
    "W6",
)

# Fixed per-signal evidence schemas; findings with unknown keys are rejected.
EVIDENCE_SCHEMAS: dict[str, frozenset[str]] = {
    "W1": frozenset({"domain", "maintainer_key"}),
    "W2": frozenset({"script_key", "has_suspicious_tokens"}),
    "W3_inactive_pkg": frozenset({"last_modified", "age_days"}),
    "W3_inactive_maintainer": frozenset({"last_modified", "maintainer_count", "latest_maintainer_activity"}),
    "W3_deprecated": frozenset({"deprecated", "last_modified"}),
    "W4": frozenset({"maintainer_count", "registry_avg"}),
    "W5": frozenset({"maintainers", "contributors", "ratio"}),
    "W6": frozenset({"owned_count", "reach", "inactive_owned_share", "dependency_using_share", "maintainer_key"}),
}


@dataclass(frozen=True)
class AnalyzerConfig:
    """All analysis thresholds, externalized.

    ``reference_time`` defaults to the corpus's max last-modified (not wall
    clock) so archived snapshots yield reproducible findings.
    """

    inactivity_days: int = 730
    reference_time: datetime | None = None
    top_percent: float = 1.0
    install_key_pattern: str = "install"
    suspicious_tokens: tuple[str, ...] = DEFAULT_SUSPICIOUS_TOKENS
    license_denylist: tuple[str, ...] = DEFAULT_LICENSE_DENYLIST

    def __post_init__(self):
        if self.inactivity_days <= 0:
            raise ValueError("inactivity_days must be positive")
        if not 0 < self.top_percent <= 100:
            raise ValueError("top_percent must be in (0, 100]")

    @property
    def inactivity_window(self) -> timedelta:
        return timedelta(days=self.inactivity_days)

    def resolved(self, corpus: Corpus) -> "AnalyzerConfig":
        """Fill in reference_time from the corpus when unset."""
        if self.reference_time is not None:
            return self
        if not corpus.records:
            raise ValueError("cannot resolve reference_time over an empty corpus")
        ref = max(rec.last_modified for rec in corpus.records)
        return replace(self, reference_time=ref)

    def to_dict(self) -> dict:
        return {
            "inactivity_days": self.inactivity_days,
            "reference_time": format_timestamp(self.reference_time) if self.reference_time else None,
            "top_percent": self.top_percent,
            "install_key_pattern": self.install_key_pattern,
            "suspicious_tokens": list(self.suspicious_tokens),
            "license_denylist": list(self.license_denylist),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnalyzerConfig":
        known = {}
        if "inactivity_days" in data:
            known["inactivity_days"] = int(data["inactivity_days"])
        if data.get("reference_time"):
            ref = parse_timestamp(data["reference_time"])
            if ref is None:
                raise ValueError(f"bad reference_time: {data['reference_time']!r}")
            known["reference_time"] = ref
        if "top_percent" in data:
            known["top_percent"] = float(data["top_percent"])
        if "install_key_pattern" in data:
            known["install_key_pattern"] = str(data["install_key_pattern"])
        if "suspicious_tokens" in data:
            known["suspicious_tokens"] = tuple(data["suspicious_tokens"])
        if "license_denylist" in data:
            known["license_denylist"] = tuple(data["license_denylist"])
        return cls(**known)


@dataclass(frozen=True)
class WeakLinkFinding:
    subject_kind: str  # "package" | "maintainer"
    subject_id: str
    signal: str
    evidence: dict[str, str]
    observed_at: datetime

    def __post_init__(self):
        if self.signal not in EVIDENCE_SCHEMAS:
            raise ValueError(f"unknown signal: {self.signal}")
        unknown = set(self.evidence) - EVIDENCE_SCHEMAS[self.signal]
        if unknown:
            raise ValueError(f"unknown evidence keys for {self.signal}: {sorted(unknown)}")
        if self.subject_kind not in ("package", "maintainer"):
            raise ValueError(f"bad subject_kind: {self.subject_kind}")

    def to_dict(self) -> dict:
        return {
            "subject_kind": self.subject_kind,
            "subject_id": self.subject_id,
            "signal": self.signal,
            "evidence": dict(sorted(self.evidence.items())),
            "observed_at": format_timestamp(self.observed_at),
        }

    def sort_key(self) -> tuple:
        return (self.signal, self.subject_id, json.dumps(self.evidence, sort_keys=True))


def _sorted_findings(findings: list[WeakLinkFinding]) -> list[WeakLinkFinding]:
    return sorted(findings, key=WeakLinkFinding.sort_key)


# --- script pattern classification -----------------------------------------


class ScriptCategory(Enum):
    REVERSE_SHELL = "reverse_shell"
    DATA_EXFILTRATION = "data_exfiltration"
    DOWNLOAD_AND_RUN = "download_and_run"
    DESTRUCTIVE_DELETE = "destructive_delete"
    NONE = "none"


@dataclass(frozen=True)
class ScriptPattern:
    category: ScriptCategory
    matched_tokens: tuple[str, ...]


def _word(token: str) -> str:
    # Word/path-boundary aware so "wget" never matches inside an identifier
    # like "wget2" or "node-wgetter", but does match "/usr/bin/wget".
    return rf"(?<![\w-]){re.escape(token)}(?![\w-])"


def _phrase(token: str) -> str:
    parts = [re.escape(p) for p in token.split()]
    return r"(?<![\w-])" + r"\s+".join(parts) + r"(?![\w-])"


def token_regex(token: str) -> re.Pattern[str]:
    if " " in token:
        return re.compile(_phrase(token))
    if token.startswith(("/", ".")):
        return re.compile(rf"(?<![\w-]){re.escape(token)}(?![\w-])")
    return re.compile(_word(token))


_NETWORK_TOKENS = ("curl", "wget", "nc", "dig")
_SENSITIVE_TOKENS = ("/etc/shadow", "/etc/passwd", ".ssh", "hostname")
_DOWNLOAD_TOKENS = ("curl", "wget")

_NETWORK_RES = {tok: token_regex(tok) for tok in _NETWORK_TOKENS}
_SENSITIVE_RES = {tok: token_regex(tok) for tok in _SENSITIVE_TOKENS}
_DEV_TCP_RE = token_regex("/dev/tcp")
_SHELL_I_RE = re.compile(r"(?<![\w-])(?:ba|da|z)?sh\s+-i(?![\w-])")
_NC_EXEC_RE = re.compile(r"(?<![\w-])nc(?![\w-])[^;|&\n]*\s-[A-Za-z]*e(?![\w-])")
_MKFIFO_RE = token_regex("mkfifo")
_NC_RE = _NETWORK_RES["nc"]
_CHMOD_X_RE = token_regex("chmod +x")
_PIPE_SHELL_RE = re.compile(r"\|\s*(?:ba|da|z)?sh(?![\w-])")
_RUN_LOCAL_RE = re.compile(r"(?:^|&&|\|\||[;&])\s*(?:\./\S+|(?:ba)?sh\s+\S+|node\s+\S+)")
_RM_RF_RE = re.compile(r"(?<![\w-])rm\s+(?P<flags>(?:-{1,2}[A-Za-z]+\s+)+)(?P<target>[^\s;&|]+)")


def classify_script(body: str, cfg: AnalyzerConfig | None = None) -> ScriptPattern:
    """Rule-based classification of a lifecycle script body.

    Rules are evaluated in severity order and the first satisfied rule
    names the category; later satisfied rules still contribute their hits
    to ``matched_tokens`` so reports lose nothing. Token matching is
    word/path-boundary aware.
    """
    hits: list[str] = []
    category = ScriptCategory.NONE

    def satisfied(cat: ScriptCategory, tokens: list[str]) -> None:
        nonlocal category
        for tok in tokens:
            if tok not in hits:
                hits.append(tok)
        if category is ScriptCategory.NONE:
            category = cat

    # 1. Reverse shell: /dev/tcp redirection, interactive shell flags, or
    #    nc in a connect-and-execute form.
    shell_hits = []
    if _DEV_TCP_RE.search(body):
        shell_hits.append("/dev/tcp")
    m = _SHELL_I_RE.search(body)
    if m:
        shell_hits.append(re.sub(r"\s+", " ", m.group(0)))
    if _NC_EXEC_RE.search(body):
        shell_hits.append("nc -e")
    elif _NC_RE.search(body) and _MKFIFO_RE.search(body):
        shell_hits.append("nc+mkfifo")
    if shell_hits:
        satisfied(ScriptCategory.REVERSE_SHELL, shell_hits)

    # 2. Data exfiltration: network tool plus a sensitive data source.
    net_hits = [tok for tok, rx in _NETWORK_RES.items() if rx.search(body)]
    sens_hits = [tok for tok, rx in _SENSITIVE_RES.items() if rx.search(body)]
    if net_hits and sens_hits:
        satisfied(ScriptCategory.DATA_EXFILTRATION, net_hits + sens_hits)

    # 3. Download and run: fetch tool plus execution of the payload.
    dl_hits = [tok for tok in _DOWNLOAD_TOKENS if _NETWORK_RES[tok].search(body)]
    exec_hits = []
    if _CHMOD_X_RE.search(body):
        exec_hits.append("chmod +x")
    if _PIPE_SHELL_RE.search(body):
        exec_hits.append("| sh")
    m = _RUN_LOCAL_RE.search(body)
    if m:
        exec_hits.append(m.group(0).lstrip("&|; \t"))
    if dl_hits and exec_hits:
        satisfied(ScriptCategory.DOWNLOAD_AND_RUN, dl_hits + exec_hits)

    # 4. Destructive delete: rm with both -r and -f aimed at a path. Benign
    #    build-directory cleanup matches too; the target rides along so
    #    consumers can judge.
    m = _RM_RF_RE.search(body)
    if m:
        flags = set("".join(ch for ch in m.group("flags") if ch.isalpha()).lower())
        if {"r", "f"} <= flags:
            satisfied(ScriptCategory.DESTRUCTIVE_DELETE, [f"rm -rf {m.group('target')}"])

    return ScriptPattern(category=category, matched_tokens=tuple(hits))


def find_suspicious_tokens(body: str, tokens: tuple[str, ...]) -> list[str]:
    """Boundary-aware scan for configured tokens; returns hits in list order."""
    return [tok for tok in tokens if token_regex(tok).search(body)]


# --- per-signal analyzers ---------------------------------------------------


def install_script_keys(scripts: dict[str, str], pattern: str) -> list[str]:
    needle = pattern.lower()
    return sorted(key for key in scripts if needle in key.lower())


def analyze_w1(
    corpus: Corpus,
    mindex: MaintainerIndex,
    domains: "DomainStatusProvider",
    cfg: AnalyzerConfig,
) -> tuple[list[WeakLinkFinding], dict[str, int]]:
    """Expired maintainer domains.

    Emits one package finding per (available-domain maintainer, owned
    package) pair, plus a domain-frequency histogram counting how often
    each domain appears across (package, maintainer) entries.
    """
    histogram: dict[str, int] = {}
    for rec in corpus.records:
        for person in rec.maintainers:
            if person.email_domain:
                histogram[person.email_domain] = histogram.get(person.email_domain, 0) + 1

    available: set[str] = set()
    for domain in sorted(histogram):
        status = domains.check(domain)
        if status.status == "available":
            available.add(domain)

    findings = []
    for key, info in mindex.items():
        domain = extract_email_domain(key)
        if domain is None or domain not in available:
            continue
        for pkg in info.owned_packages:
            findings.append(
                WeakLinkFinding(
                    subject_kind="package",
                    subject_id=pkg,
                    signal="W1",
                    evidence={"domain": domain, "maintainer_key": key},
                    observed_at=cfg.reference_time,
                )
            )
    return _sorted_findings(findings), dict(sorted(histogram.items()))


def analyze_w2(corpus: Corpus, cfg: AnalyzerConfig) -> list[WeakLinkFinding]:
    """Install scripts: flag any package with a script key containing the
    install pattern. The token scan enriches evidence but never gates the
    flag."""
    findings = []
    for rec in corpus.records:
        keys = install_script_keys(rec.scripts, cfg.install_key_pattern)
        if not keys:
            continue
        has_tokens = any(find_suspicious_tokens(rec.scripts[k], cfg.suspicious_tokens) for k in keys)
        findings.append(
            WeakLinkFinding(
                subject_kind="package",
                subject_id=rec.name,
                signal="W2",
                evidence={"script_key": ",".join(keys), "has_suspicious_tokens": "true" if has_tokens else "false"},
                observed_at=cfg.reference_time,
            )
        )
    return _sorted_findings(findings)


def is_inactive(last_modified: datetime, cfg: AnalyzerConfig) -> bool:
    return (cfg.reference_time - last_modified) > cfg.inactivity_window


def analyze_w3(corpus: Corpus, mindex: MaintainerIndex, cfg: AnalyzerConfig) -> list[WeakLinkFinding]:
    """Unmaintained packages.

    W3_inactive_pkg: no modification within the window. W3_inactive_maintainer:
    every maintainer's registry-wide last activity violates the window (a
    package with one maintainer active elsewhere does not qualify).
    W3_deprecated: retained deprecated packages whose deprecation predates
    the window, using last-modified as the deprecation time.
    """
    from .exclusions import is_deprecated_latest

    findings = []
    for rec in corpus.records:
        inactive = is_inactive(rec.last_modified, cfg)
        if inactive:
            age = (cfg.reference_time - rec.last_modified).days
            findings.append(
                WeakLinkFinding(
                    subject_kind="package",
                    subject_id=rec.name,
                    signal="W3_inactive_pkg",
                    evidence={"last_modified": format_timestamp(rec.last_modified), "age_days": str(age)},
                    observed_at=cfg.reference_time,
                )
            )
            if rec.maintainers:
                activities = [mindex[p.identity_key].last_activity for p in rec.maintainers if p.identity_key in mindex]
                if activities and all(is_inactive(act, cfg) for act in activities):
                    findings.append(
                        WeakLinkFinding(
                            subject_kind="package",
                            subject_id=rec.name,
                            signal="W3_inactive_maintainer",
                            evidence={
                                "last_modified": format_timestamp(rec.last_modified),
                                "maintainer_count": str(len(rec.maintainers)),
                                "latest_maintainer_activity": format_timestamp(max(activities)),
                            },
                            observed_at=cfg.reference_time,
                        )
                    )
        if is_deprecated_latest(rec) and inactive:
            message = rec.deprecated if isinstance(rec.deprecated, str) else "true"
            findings.append(
                WeakLinkFinding(
                    subject_kind="package",
                    subject_id=rec.name,
                    signal="W3_deprecated",
                    evidence={"deprecated": message, "last_modified": format_timestamp(rec.last_modified)},
                    observed_at=cfg.reference_time,
                )
            )
    return _sorted_findings(findings)


def mean_maintainers(corpus: Corpus) -> float:
    if not corpus.records:
        return 0.0
    return sum(len(rec.maintainers) for rec in corpus.records) / len(corpus.records)


def analyze_w4(corpus: Corpus, cfg: AnalyzerConfig) -> list[WeakLinkFinding]:
    """Too many maintainers: top percentile by maintainer count (closed ties).

    Ranked over packages that list maintainers at all; a degenerate ranking
    (every count equal) still emits, by the closed-tie rule.
    """
    population = [rec for rec in corpus.records if rec.maintainers]
    if not population:
        return []
    registry_avg = mean_maintainers(corpus)
    scored = [(rec.name, len(rec.maintainers)) for rec in population]
    flagged = top_percent(scored, cfg.top_percent)
    by_name = corpus.by_name
    findings = [
        WeakLinkFinding(
            subject_kind="package",
            subject_id=name,
            signal="W4",
            evidence={"maintainer_count": str(len(by_name[name].maintainers)), "registry_avg": f"{registry_avg:.4f}"},
            observed_at=cfg.reference_time,
        )
        for name, _count in flagged
    ]
    return _sorted_findings(findings)


def analyze_w5(corpus: Corpus, cfg: AnalyzerConfig) -> list[WeakLinkFinding]:
    """Maintainer-to-contributor imbalance.

    Restricted to packages that list contributors at all; the lowest
    maintainers/contributors ratios are the riskiest, so the bottom
    percentile is selected.
    """
    population = [rec for rec in corpus.records if rec.contributors]
    if not population:
        return []
    scored = [(rec.name, -(len(rec.maintainers) / len(rec.contributors))) for rec in population]
    flagged = top_percent(scored, cfg.top_percent)
    by_name = corpus.by_name
    findings = []
    for name, _neg_ratio in flagged:
        rec = by_name[name]
        ratio = len(rec.maintainers) / len(rec.contributors)
        findings.append(
            WeakLinkFinding(
                subject_kind="package",
                subject_id=name,
                signal="W5",
                evidence={
                    "maintainers": str(len(rec.maintainers)),
                    "contributors": str(len(rec.contributors)),
                    "ratio": f"{ratio:.6f}",
                },
                observed_at=cfg.reference_time,
            )
        )
    return _sorted_findings(findings)


def analyze_w6(
    corpus: Corpus,
    mindex: MaintainerIndex,
    dindex: DependentsIndex,
    cfg: AnalyzerConfig,
) -> list[WeakLinkFinding]:
    """Overloaded maintainers: top percentile by maintainer reach.

    Emits one maintainer-subject finding per flagged identity plus one
    package-subject finding per owned package, all carrying the same
    ownership evidence.
    """
    if not mindex:
        return []
    by_name = corpus.by_name
    reaches = [(key, maintainer_reach(key, mindex, dindex)) for key in mindex]
    flagged = top_percent(reaches, cfg.top_percent)
    findings = []
    for key, reach in flagged:
        info = mindex[key]
        owned = sorted(info.owned_packages)
        inactive_owned = sum(1 for pkg in owned if is_inactive(by_name[pkg].last_modified, cfg))
        with_deps = sum(1 for pkg in owned if by_name[pkg].dependencies)
        evidence = {
            "owned_count": str(len(owned)),
            "reach": str(reach),
            "inactive_owned_share": f"{inactive_owned / len(owned):.4f}",
            "dependency_using_share": f"{with_deps / len(owned):.4f}",
            "maintainer_key": key,
        }
        findings.append(
            WeakLinkFinding(
                subject_kind="maintainer",
                subject_id=key,
                signal="W6",
                evidence=evidence,
                observed_at=cfg.reference_time,
            )
        )
        for pkg in owned:
            findings.append(
                WeakLinkFinding(
                    subject_kind="package",
                    subject_id=pkg,
                    signal="W6",
                    evidence=evidence,
                    observed_at=cfg.reference_time,
                )
            )
    return _sorted_findings(findings)
