import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


class MockService:
    """Tiny in-process rewriter/scorer service with injectable behavior.

    The default behavior rewrites every target to the source text and
    scores every item 0.0. Tests override `behavior`, a callable
    (path, items) -> (status_code, payload_dict | None).
    """

    def __init__(self):
        self.requests: list[tuple[str, list]] = []
        self.behavior = None
        self._lock = threading.Lock()

        service = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length)) if length else {}
                items = body.get("items", [])
                with service._lock:
                    service.requests.append((self.path, items, dict(self.headers)))
                    behavior = service.behavior
                if behavior is not None:
                    status, payload = behavior(self.path, items)
                else:
                    status, payload = 200, service.default_payload(self.path, items)
                data = json.dumps(payload).encode("utf-8") if payload is not None else b""
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = HTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        self.url = f"http://127.0.0.1:{self._server.server_port}"

    @staticmethod
    def default_payload(path: str, items: list) -> dict:
        if path == "/rewrite":
            return {"items": [{"id": it["id"], "target": it["source"]} for it in items]}
        return {"items": [{"id": it["id"], "score": 0.0} for it in items]}

    @property
    def request_count(self) -> int:
        with self._lock:
            return len(self.requests)

    def close(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def mock_service():
    service = MockService()
    yield service
    service.close()
