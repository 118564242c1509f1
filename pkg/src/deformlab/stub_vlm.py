"""Offline test double for the remote judge endpoint.

Serves the same wire protocol (POST JSON {prompt, images} -> plain
text). Behaviours: always_yes / always_no; ``scripted`` replays canned
response texts from a file in request order (separated by lines of
``---``), repeating the last one when exhausted; ``oracle_file`` reads
one YES/NO token per line and wraps it in a well-formed answer.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

YES_TEXT = "reasoning:\n- representation matches the object outline\nANSWER: YES"
NO_TEXT = "reasoning:\n- representation does not match the object\nANSWER: NO"


def load_scripted(path) -> list[str]:
    with open(path) as f:
        raw = f.read()
    parts = [p.strip("\n") for p in raw.split("\n---\n")]
    return [p for p in parts if p.strip()]


def load_oracle_file(path) -> list[str]:
    responses = []
    with open(path) as f:
        for line in f:
            token = line.strip().upper()
            if not token:
                continue
            responses.append(YES_TEXT if token == "YES" else NO_TEXT)
    return responses


class StubVlmServer:
    """always_yes | always_no | scripted | oracle_file behaviours."""

    def __init__(self, port: int, behavior: str, script_path=None, host: str = "127.0.0.1"):
        self.behavior = behavior
        self.requests_seen = 0
        self._lock = threading.Lock()
        if behavior in ("scripted", "oracle_file"):
            if script_path is None:
                raise ValueError(f"behavior {behavior!r} needs a script file")
            loader = load_scripted if behavior == "scripted" else load_oracle_file
            self._responses = loader(script_path)
            if not self._responses:
                raise ValueError(f"no responses in {script_path}")
        elif behavior not in ("always_yes", "always_no"):
            raise ValueError(f"unknown behavior {behavior!r}")

        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                try:
                    payload = json.loads(body)
                    _ = payload["prompt"], payload["images"]
                except (ValueError, KeyError):
                    self.send_response(400)
                    self.end_headers()
                    return
                text = stub._next_response()
                data = text.encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "text/plain; charset=utf-8")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    def _next_response(self) -> str:
        with self._lock:
            i = self.requests_seen
            self.requests_seen += 1
        if self.behavior == "always_yes":
            return YES_TEXT
        if self.behavior == "always_no":
            return NO_TEXT
        return self._responses[min(i, len(self._responses) - 1)]

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
