"""Local HTTP server replaying a trade series through the aggregated-trades API shape.

Used by the tests and demos in place of a live exchange.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from .core import Trades


class MockExchange:
    """Serves ``GET /api/v3/aggTrades`` for the given symbols.

    ``fail_next`` makes the next N requests answer 503; ``drop_ids`` removes
    ids from responses to simulate a cursor gap; ``max_limit`` caps page size.
    """

    def __init__(self, series: dict[str, Trades], max_limit: int = 1000, path: str = "/api/v3/aggTrades"):
        self.series = series
        self.max_limit = max_limit
        self.path = path
        self.fail_next = 0
        self.drop_ids: set[int] = set()
        self.requests: list[dict[str, str]] = []
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def _rows(self, t: Trades, idx) -> list[dict]:
        out = []
        for i in idx:
            tid = int(t.trade_id[i])
            if tid in self.drop_ids:
                continue
            out.append({"a": tid, "p": t.price_text[i] if t.price_text else repr(float(t.price[i])),
                        "q": t.qty_text[i] if t.qty_text else repr(float(t.qty[i])),
                        "f": tid, "l": tid, "T": int(t.ts_ms[i]), "m": not bool(t.is_buy_taker[i]),
                        "M": True})
        return out

    def handle(self, query: dict[str, str]) -> tuple[int, object]:
        self.requests.append(query)
        if self.fail_next > 0:
            self.fail_next -= 1
            return 503, {"code": -1, "msg": "unavailable"}
        t = self.series.get(query.get("symbol", ""))
        if t is None:
            return 400, {"code": -1121, "msg": "Invalid symbol."}
        limit = min(int(query.get("limit", 500)), self.max_limit)
        if "fromId" in query:
            lo = int(np.searchsorted(t.trade_id, int(query["fromId"]), side="left"))
            idx = range(lo, min(lo + limit, len(t)))
        else:
            start = int(query.get("startTime", 0))
            end = int(query.get("endTime", 2**62))
            lo = int(np.searchsorted(t.ts_ms, start, side="left"))
            hi = int(np.searchsorted(t.ts_ms, end, side="right"))
            idx = range(lo, min(hi, lo + limit))
        return 200, self._rows(t, idx)

    def start(self) -> str:
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802
                url = urlparse(self.path)
                if url.path != mock.path:
                    status, body = 404, {"msg": "not found"}
                else:
                    status, body = mock.handle({k: v[-1] for k, v in parse_qs(url.query).items()})
                data = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> str:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
