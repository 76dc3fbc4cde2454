"""Provider behavior: fixtures, caching, rate limiting, live stubs."""

from __future__ import annotations

import json
import socket
import struct
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from weaklink.errors import FixtureError
from weaklink.providers import (
    CachingDomainProvider,
    EmptyDownloadsProvider,
    FixtureDomainProvider,
    FixtureDownloadsProvider,
    LiveDnsDomainProvider,
    LiveDownloadsProvider,
    RateLimiter,
    STATUS_AVAILABLE,
    STATUS_REGISTERED,
    STATUS_UNKNOWN,
)


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return path


# --- fixture providers -----------------------------------------------------


def test_domain_fixture_echo_and_miss(tmp_path):
    path = write_jsonl(tmp_path / "domains.jsonl", [{"domain": "oldsite.io", "status": "available"}])
    provider = FixtureDomainProvider(path)
    assert provider.check("oldsite.io").status == STATUS_AVAILABLE
    assert provider.check("OLDSITE.IO").status == STATUS_AVAILABLE
    assert provider.check("unknown.example").status == STATUS_UNKNOWN


def test_domain_fixture_validation(tmp_path):
    path = write_jsonl(tmp_path / "bad.jsonl", [{"domain": "x.io", "status": "sold-out"}])
    with pytest.raises(FixtureError):
        FixtureDomainProvider(path)
    with pytest.raises(FixtureError):
        FixtureDomainProvider(tmp_path / "missing.jsonl")


def test_downloads_fixture(tmp_path):
    path = write_jsonl(tmp_path / "dl.jsonl", [{"package": "left-pad", "downloads": 1_000_000}])
    provider = FixtureDownloadsProvider(path)
    assert provider.downloads("left-pad") == 1_000_000
    assert provider.downloads("ghost") is None
    assert len(provider) == 1


def test_downloads_fixture_validation(tmp_path):
    path = write_jsonl(tmp_path / "dl.jsonl", [{"package": "x", "downloads": -3}])
    with pytest.raises(FixtureError):
        FixtureDownloadsProvider(path)


def test_empty_downloads_provider():
    provider = EmptyDownloadsProvider()
    assert provider.downloads("anything") is None
    assert len(provider) == 0


class CountingProvider:
    def __init__(self):
        self.calls = 0

    def check(self, domain):
        from datetime import datetime, timezone

        from weaklink.providers import DomainStatus

        self.calls += 1
        return DomainStatus(
            domain=domain, status=STATUS_REGISTERED, checked_at=datetime.now(timezone.utc), source="fixture"
        )


def test_caching_provider_queries_once_per_domain():
    inner = CountingProvider()
    cached = CachingDomainProvider(inner)
    for _ in range(5):
        cached.check("x.example")
        cached.check("X.EXAMPLE")
    cached.check("y.example")
    assert inner.calls == 2


# --- rate limiter -------------------------------------------------------------


def test_rate_limiter_enforces_interval():
    limiter = RateLimiter(per_second=50)
    start = time.monotonic()
    for _ in range(10):
        limiter.acquire()
    elapsed = time.monotonic() - start
    assert elapsed >= 9 / 50 - 0.005


def test_rate_limiter_under_concurrency():
    limiter = RateLimiter(per_second=100)
    stamps = []
    lock = threading.Lock()

    def worker():
        for _ in range(5):
            limiter.acquire()
            with lock:
                stamps.append(time.monotonic())

    threads = [threading.Thread(target=worker) for _ in range(4)]
    start = time.monotonic()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(stamps) == 20
    assert time.monotonic() - start >= 19 / 100 - 0.01
    # No burst: every successive acquisition respects the interval within
    # scheduler tolerance.
    stamps.sort()
    gaps = [b - a for a, b in zip(stamps, stamps[1:])]
    assert min(gaps) >= 0.0

    with pytest.raises(ValueError):
        RateLimiter(0)


# --- live DNS against a local stub resolver ---------------------------------------


class StubResolver:
    """Tiny UDP DNS server answering from a canned (name, qtype) -> count map."""

    def __init__(self, answers):
        self.answers = answers
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(("127.0.0.1", 0))
        self.addr = self.sock.getsockname()
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._stop = False

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop = True
        self.sock.close()

    def _serve(self):
        while not self._stop:
            try:
                data, addr = self.sock.recvfrom(4096)
            except OSError:
                return
            txn = data[:2]
            # Decode qname labels.
            labels = []
            pos = 12
            while data[pos]:
                length = data[pos]
                labels.append(data[pos + 1 : pos + 1 + length].decode())
                pos += 1 + length
            qtype = struct.unpack(">H", data[pos + 1 : pos + 3])[0]
            name = ".".join(labels)
            count = self.answers.get((name, qtype), 0)
            nxdomain = (name, "nxdomain") in self.answers
            flags = 0x8183 if nxdomain else 0x8180
            header = txn + struct.pack(">HHHHH", flags, 1, count, 0, 0)
            # Echo the question section; answers are counted from the header
            # only, so no RR bodies are needed.
            question = data[12 : pos + 5]
            self.sock.sendto(header + question, addr)


NS, MX = LiveDnsDomainProvider.QTYPE_NS, LiveDnsDomainProvider.QTYPE_MX


def test_live_dns_registered_domain():
    with StubResolver({("solid.example", NS): 2, ("solid.example", MX): 1}) as stub:
        provider = LiveDnsDomainProvider(resolver=stub.addr, timeout=2.0)
        status = provider.check("solid.example")
    assert status.status == STATUS_REGISTERED
    assert status.source == "live"
    assert status.method == "dns-ns-mx"


def test_live_dns_candidate_available():
    with StubResolver({("lapsed.example", NS): 0, ("lapsed.example", MX): 0}) as stub:
        provider = LiveDnsDomainProvider(resolver=stub.addr, timeout=2.0)
        status = provider.check("lapsed.example")
    assert status.status == STATUS_AVAILABLE


def test_live_dns_failure_degrades_to_unknown():
    provider = LiveDnsDomainProvider(resolver=("127.0.0.1", 1), timeout=0.2)
    status = provider.check("whatever.example")
    assert status.status == STATUS_UNKNOWN
    assert provider.warnings == 1


# --- live downloads against a local HTTP stub ---------------------------------------


class StubDownloads(BaseHTTPRequestHandler):
    hits = []

    def do_GET(self):
        StubDownloads.hits.append((time.monotonic(), self.path))
        if "missing" in self.path:
            self.send_response(404)
            self.end_headers()
            return
        if "flaky" in self.path:
            self.send_response(500)
            self.end_headers()
            return
        body = json.dumps({"downloads": 53_000, "package": self.path.rsplit("/", 1)[-1]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_stub():
    StubDownloads.hits = []
    server = HTTPServer(("127.0.0.1", 0), StubDownloads)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_live_downloads_success(http_stub):
    provider = LiveDownloadsProvider(http_stub, rate_limit=200)
    assert provider.downloads("left-pad") == 53_000
    stats = provider.fetch_stats("left-pad")
    assert stats.count == 53_000
    assert stats.window == "last-year"
    assert provider.warnings == 0


def test_live_downloads_404_is_unknown(http_stub):
    provider = LiveDownloadsProvider(http_stub, rate_limit=200)
    assert provider.downloads("missing-pkg") is None
    assert provider.warnings == 0


def test_live_downloads_error_exhausts_retries(http_stub):
    provider = LiveDownloadsProvider(http_stub, rate_limit=200, retries=2)
    assert provider.downloads("flaky-pkg") is None
    assert provider.warnings == 1
    assert len([h for h in StubDownloads.hits if "flaky" in h[1]]) == 3


def test_live_downloads_rate_limited(http_stub):
    provider = LiveDownloadsProvider(http_stub, rate_limit=50)
    start = time.monotonic()
    for i in range(8):
        provider.downloads(f"pkg{i}")
    assert time.monotonic() - start >= 7 / 50 - 0.005


def test_fetch_many_bounded_and_rate_limited(http_stub):
    provider = LiveDownloadsProvider(http_stub, rate_limit=100)
    start = time.monotonic()
    counts = provider.fetch_many([f"pkg{i}" for i in range(10)] + ["pkg0"], concurrency=4)
    elapsed = time.monotonic() - start
    assert counts == {f"pkg{i}": 53_000 for i in range(10)}
    # Deduplicated to 10 requests, still spaced by the shared limiter.
    assert elapsed >= 9 / 100 - 0.005


def test_live_downloads_sends_agent_string(http_stub):
    captured = {}

    class Capture(StubDownloads):
        def do_GET(self):
            captured["ua"] = self.headers.get("User-Agent")
            super().do_GET()

    server = HTTPServer(("127.0.0.1", 0), Capture)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        provider = LiveDownloadsProvider(f"http://127.0.0.1:{server.server_port}", rate_limit=200)
        provider.downloads("x")
    finally:
        server.shutdown()
    assert captured["ua"].startswith("weaklink-scanner/")
