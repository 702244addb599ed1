"""Search tool over HTTP, plus a local mock search server for tests and benchmarks.

Mock server protocol: ``GET /search?q=<urlencoded>`` answers ``200`` with a
text body, ``GET /health`` answers ``ok``. Every request is logged as
``(arrival_us, path, query, delay_us)``. With ``simulate_delay`` the server
does not sleep; it reports the configured delay in the
``X-Simulated-Delay-Us`` header and the client charges it to its own clock,
which is how the delay is accounted for under virtual time.
"""

from __future__ import annotations

import http.client
import json
import threading
import time
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from ..plugins import ACCEPTED, Field, Observation, Plugin, ToolError

DELAY_HEADER = "X-Simulated-Delay-Us"


class WebSearch(Plugin):
    """Field-granularity search: each completed ``query`` value issues one request."""

    def on_start(self, ctx):
        super().on_start(ctx)
        base = ctx.settings.get("base_url")
        if not base:
            raise ToolError("websearch needs settings['base_url']")
        url = urllib.parse.urlsplit(base)
        self.prefix = url.path.rstrip("/")
        self.conn = http.client.HTTPConnection(url.hostname, url.port or 80,
                                               timeout=ctx.settings.get("timeout_s", 10))
        self.results: list[str] = []
        self._get("/health")

    def _get(self, path: str) -> str:
        try:
            self.conn.request("GET", self.prefix + path)
            resp = self.conn.getresponse()
            body = resp.read().decode("utf-8")
        except OSError as exc:
            self.conn.close()
            raise ToolError(f"search request failed: {exc}") from exc
        if resp.status >= 400:
            raise ToolError(f"search server answered HTTP {resp.status}")
        delay = resp.getheader(DELAY_HEADER)
        if delay:
            self.ctx.clock.sleep_us(int(delay))
        return body

    def on_data(self, piece):
        if isinstance(piece, Field):
            if piece.path[-1:] != ("query",):
                return ACCEPTED
            query = piece.value
        else:
            query = str(piece)
        if not query.strip():
            raise ToolError("empty query")
        self.results.append(self._get("/search?" + urllib.parse.urlencode({"q": query})))
        return ACCEPTED

    def on_finish(self):
        self.conn.close()
        if not self.results:
            return Observation.failure("IncompleteInput: no query received")
        return Observation("\n".join(self.results))


class _Handler(BaseHTTPRequestHandler):
    server: "_Server"

    def do_GET(self):
        owner = self.server.owner
        arrival = owner.now_us()
        url = urllib.parse.urlsplit(self.path)
        if url.path == "/health":
            owner.record(arrival, "/health", "", 0)
            self._reply(200, "ok", 0)
            return
        if url.path != "/search":
            self._reply(404, "not found", 0)
            return
        q = urllib.parse.parse_qs(url.query).get("q", [""])[0]
        delay = owner.delays.get(q, owner.delay_us)
        owner.record(arrival, "/search", q, delay)
        if not q:
            self._reply(400, "empty query", 0)
            return
        if not owner.simulate_delay and delay:
            time.sleep(delay / 1e6)
        self._reply(200, owner.fixtures.get(q, f"no results for {q}"), delay)

    def _reply(self, status: int, body: str, delay: int):
        data = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        if self.server.owner.simulate_delay:
            self.send_header(DELAY_HEADER, str(delay))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    owner: "MockSearchServer"


class MockSearchServer:
    """Local search service with canned answers and a configurable delay.

    ``fixtures`` maps a query to its response body; ``delays`` optionally
    overrides ``delay_us`` per query.
    """

    def __init__(self, fixtures: dict[str, str] | None = None, delay_us: int = 0,
                 delays: dict[str, int] | None = None, simulate_delay: bool = False,
                 log_path: str | Path | None = None):
        self.fixtures = dict(fixtures or {})
        self.delay_us = delay_us
        self.delays = dict(delays or {})
        self.simulate_delay = simulate_delay
        self.log_path = log_path
        self.log: list[tuple[int, str, str, int]] = []
        self._lock = threading.Lock()
        self._origin = time.perf_counter_ns()
        self._server: _Server | None = None
        self._thread: threading.Thread | None = None

    @classmethod
    def from_fixture_file(cls, path: str | Path, **kw) -> "MockSearchServer":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        kw.setdefault("delay_us", data.get("delay_us", 0))
        kw.setdefault("delays", data.get("delays", {}))
        return cls(data.get("responses", {}), **kw)

    def now_us(self) -> int:
        return (time.perf_counter_ns() - self._origin) // 1000

    def record(self, arrival: int, path: str, q: str, delay: int) -> None:
        with self._lock:
            self.log.append((arrival, path, q, delay))
            if self.log_path:
                with open(self.log_path, "a", encoding="utf-8") as fh:
                    fh.write(f"{arrival}\t{path}\t{q}\t{delay}\n")

    def queries(self) -> list[str]:
        return [q for _, path, q, _ in self.log if path == "/search"]

    def start(self) -> "MockSearchServer":
        self._server = _Server(("127.0.0.1", 0), _Handler)
        self._server.owner = self
        self._thread = threading.Thread(target=self._server.serve_forever, args=(0.01,), name="mock-search",
                                        daemon=True)
        self._thread.start()
        return self

    @property
    def base_url(self) -> str:
        if self._server is None:
            raise RuntimeError("server not started")
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
