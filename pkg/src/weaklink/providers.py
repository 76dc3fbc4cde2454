"""Pluggable providers for domain availability and download counts.

Each provider has a fixture-replay mode (deterministic, offline; the whole
scan pipeline passes acceptance with no network access) and a live mode.

Live domain checks use a DNS NS/MX-evidence heuristic: a domain with neither
NS nor MX records is reported as a candidate for registration. That verdict
is advisory; registrar truth requires manual verification, so the method is
recorded alongside the status and provider errors always degrade to
"unknown", never to "available".
"""

from __future__ import annotations

import json
import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

import requests

from .errors import FixtureError

logger = logging.getLogger(__name__)

USER_AGENT = "weaklink-scanner/0.1 (registry metadata research)"

STATUS_AVAILABLE = "available"
STATUS_REGISTERED = "registered"
STATUS_UNKNOWN = "unknown"

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class DomainStatus:
    domain: str
    status: str  # available | registered | unknown
    checked_at: datetime
    source: str  # live | fixture
    method: str = ""


@dataclass(frozen=True)
class DownloadStats:
    package: str
    window: str
    count: int | None
    source: str


class DomainStatusProvider(Protocol):
    def check(self, domain: str) -> DomainStatus: ...


class DownloadsProvider(Protocol):
    def downloads(self, package: str) -> int | None: ...


class RateLimiter:
    """Min-interval limiter: callers never exceed ``per_second`` requests/s."""

    def __init__(self, per_second: float):
        if per_second <= 0:
            raise ValueError("rate must be positive")
        self._interval = 1.0 / per_second
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                if now >= self._next_at:
                    self._next_at = now + self._interval
                    return
                wait = self._next_at - now
            time.sleep(wait)


def _load_jsonl(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"fixture not found: {path}")
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FixtureError(f"{path}:{lineno}: bad JSON: {exc}") from exc
    return rows


class FixtureDomainProvider:
    """Exact-match lookup in a JSONL fixture; misses come back unknown."""

    def __init__(self, path: str | Path):
        self._statuses: dict[str, str] = {}
        for row in _load_jsonl(path):
            domain = str(row.get("domain", "")).lower()
            status = str(row.get("status", "")).lower()
            if not domain or status not in (STATUS_AVAILABLE, STATUS_REGISTERED, STATUS_UNKNOWN):
                raise FixtureError(f"bad domain fixture row: {row!r}")
            self._statuses[domain] = status
        self.warnings = 0

    def check(self, domain: str) -> DomainStatus:
        status = self._statuses.get(domain.lower(), STATUS_UNKNOWN)
        return DomainStatus(domain=domain.lower(), status=status, checked_at=_EPOCH, source="fixture", method="fixture")


class EmptyDomainProvider:
    """No data source configured: everything is unknown."""

    warnings = 0

    def check(self, domain: str) -> DomainStatus:
        return DomainStatus(domain=domain.lower(), status=STATUS_UNKNOWN, checked_at=_EPOCH, source="fixture", method="none")


def _encode_dns_query(domain: str, qtype: int, txn_id: int) -> bytes:
    header = struct.pack(">HHHHHH", txn_id, 0x0100, 1, 0, 0, 0)
    qname = b""
    for label in domain.strip(".").split("."):
        raw = label.encode("idna") if not label.isascii() else label.encode("ascii")
        qname += struct.pack("B", len(raw)) + raw
    return header + qname + b"\x00" + struct.pack(">HH", qtype, 1)


def _dns_answer_count(domain: str, qtype: int, server: tuple[str, int], timeout: float) -> int:
    """Number of answer records for (domain, qtype); raises OSError on failure."""
    txn_id = hash(domain) & 0xFFFF
    query = _encode_dns_query(domain, qtype, txn_id)
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.settimeout(timeout)
        sock.sendto(query, server)
        data, _addr = sock.recvfrom(4096)
    if len(data) < 12:
        raise OSError("short DNS response")
    rid, flags, _qd, ancount, _ns, _ar = struct.unpack(">HHHHHH", data[:12])
    if rid != txn_id:
        raise OSError("DNS transaction id mismatch")
    rcode = flags & 0x000F
    if rcode == 3:  # NXDOMAIN: authoritatively no records
        return 0
    if rcode != 0:
        raise OSError(f"DNS rcode {rcode}")
    return ancount


class LiveDnsDomainProvider:
    """DNS-evidence heuristic for domain availability.

    No NS and no MX records means the domain is a candidate for
    registration (status "available", method "dns-ns-mx") -- an advisory
    signal, not registrar ground truth. Any lookup failure yields
    "unknown".
    """

    QTYPE_NS = 2
    QTYPE_MX = 15

    def __init__(self, resolver: tuple[str, int] = ("8.8.8.8", 53), timeout: float = 3.0, limiter: RateLimiter | None = None):
        self._resolver = resolver
        self._timeout = timeout
        self._limiter = limiter
        self.warnings = 0

    def check(self, domain: str) -> DomainStatus:
        domain = domain.lower()
        now = datetime.now(timezone.utc)
        try:
            if self._limiter is not None:
                self._limiter.acquire()
            ns = _dns_answer_count(domain, self.QTYPE_NS, self._resolver, self._timeout)
            mx = _dns_answer_count(domain, self.QTYPE_MX, self._resolver, self._timeout)
        except OSError as exc:
            logger.warning("DNS lookup failed for %s: %s", domain, exc)
            self.warnings += 1
            return DomainStatus(domain=domain, status=STATUS_UNKNOWN, checked_at=now, source="live", method="dns-ns-mx")
        status = STATUS_AVAILABLE if ns == 0 and mx == 0 else STATUS_REGISTERED
        return DomainStatus(domain=domain, status=status, checked_at=now, source="live", method="dns-ns-mx")


class CachingDomainProvider:
    """Per-run cache so a domain is queried at most once per scan."""

    def __init__(self, inner: DomainStatusProvider):
        self._inner = inner
        self._cache: dict[str, DomainStatus] = {}
        self._lock = threading.Lock()

    @property
    def warnings(self) -> int:
        return getattr(self._inner, "warnings", 0)

    def check(self, domain: str) -> DomainStatus:
        key = domain.lower()
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        status = self._inner.check(key)
        with self._lock:
            self._cache.setdefault(key, status)
        return status


class FixtureDownloadsProvider:
    """JSONL map of package name to 12-month download count."""

    def __init__(self, path: str | Path):
        self._counts: dict[str, int] = {}
        for row in _load_jsonl(path):
            package = row.get("package")
            count = row.get("downloads")
            if not isinstance(package, str) or not isinstance(count, int) or count < 0:
                raise FixtureError(f"bad downloads fixture row: {row!r}")
            self._counts[package] = count
        self.warnings = 0

    def downloads(self, package: str) -> int | None:
        return self._counts.get(package)

    def __len__(self) -> int:
        return len(self._counts)


class EmptyDownloadsProvider:
    """No data source configured: all counts unknown."""

    warnings = 0

    def __len__(self) -> int:
        return 0

    def downloads(self, package: str) -> int | None:
        return None


class LiveDownloadsProvider:
    """One GET per package against the point-downloads endpoint shape,
    rate limited with bounded retries; failures come back unknown."""

    def __init__(
        self,
        base_url: str,
        window: str = "last-year",
        rate_limit: float = 10.0,
        timeout: float = 10.0,
        retries: int = 2,
        session: requests.Session | None = None,
    ):
        self._base_url = base_url.rstrip("/")
        self._window = window
        self._limiter = RateLimiter(rate_limit)
        self._timeout = timeout
        self._retries = retries
        self._session = session or requests.Session()
        self._session.headers["User-Agent"] = USER_AGENT
        self.warnings = 0
        self._lock = threading.Lock()

    def downloads(self, package: str) -> int | None:
        url = f"{self._base_url}/downloads/point/{self._window}/{package}"
        for _attempt in range(self._retries + 1):
            self._limiter.acquire()
            try:
                resp = self._session.get(url, timeout=self._timeout)
            except requests.RequestException as exc:
                logger.warning("downloads fetch failed for %s: %s", package, exc)
                continue
            if resp.status_code == 404:
                return None
            if resp.status_code != 200:
                continue
            try:
                count = resp.json().get("downloads")
            except ValueError:
                continue
            if isinstance(count, int) and count >= 0:
                return count
        with self._lock:
            self.warnings += 1
        return None

    def fetch_stats(self, package: str) -> DownloadStats:
        return DownloadStats(package=package, window=self._window, count=self.downloads(package), source="live")

    def fetch_many(self, packages: list[str], concurrency: int = 4) -> dict[str, int | None]:
        """Fetch counts for many packages with bounded in-flight requests.

        The shared rate limiter still applies across workers, so concurrency
        raises overlap, never the request rate.
        """
        from concurrent.futures import ThreadPoolExecutor

        ordered = sorted(set(packages))
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            counts = list(pool.map(self.downloads, ordered))
        return dict(zip(ordered, counts))


class PrefetchedDownloads:
    """Immutable map of already-fetched counts; lock-free reads."""

    def __init__(self, counts: dict[str, int | None], warnings: int = 0):
        self._counts = dict(counts)
        self.warnings = warnings

    def __len__(self) -> int:
        return sum(1 for v in self._counts.values() if v is not None)

    def downloads(self, package: str) -> int | None:
        return self._counts.get(package)
